//! Process setup shared by the binary and the acceptance runner.

#[cfg(all(feature = "blas", unix, target_arch = "x86_64"))]
const CORETYPE: &str = "OPENBLAS_CORETYPE";

/// OpenBLAS picks its kernels when the library is loaded and falls back to a
/// slow generic one on CPUs it does not recognise, which is common under
/// virtualization. On an AVX-512 CPU with no core type given, this re-executes
/// the current process with `OPENBLAS_CORETYPE=SkylakeX`. Otherwise, or if the
/// re-exec fails, it returns and the process carries on unchanged.
#[cfg(all(feature = "blas", unix, target_arch = "x86_64"))]
pub fn pin_blas_kernel() {
    use std::os::unix::process::CommandExt;

    if std::env::var_os(CORETYPE).is_some() {
        return;
    }
    let avx512 = is_x86_feature_detected!("avx512f")
        && is_x86_feature_detected!("avx512bw")
        && is_x86_feature_detected!("avx512dq")
        && is_x86_feature_detected!("avx512vl");
    if !avx512 {
        return;
    }
    let Ok(exe) = std::env::current_exe() else {
        return;
    };
    let mut args = std::env::args_os();
    let arg0 = args.next().unwrap_or_else(|| exe.clone().into_os_string());
    // Only returns on failure.
    let _ = std::process::Command::new(&exe)
        .arg0(arg0)
        .args(args)
        .env(CORETYPE, "SkylakeX")
        .exec();
}

#[cfg(not(all(feature = "blas", unix, target_arch = "x86_64")))]
pub fn pin_blas_kernel() {}
