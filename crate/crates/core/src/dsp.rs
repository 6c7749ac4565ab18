use num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place forward DFT, `X[k] = sum x[n] e^{-2 pi i k n / N}`.
pub(crate) fn fft_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(buf.len()).process(buf);
}

/// In-place inverse DFT including the `1/N` factor.
pub(crate) fn ifft_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let n = buf.len();
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(buf);
    let scale = 1.0 / n as f64;
    for z in buf.iter_mut() {
        *z *= scale;
    }
}

/// Zero-pads (or truncates) `x` to length `n` and transforms it.
pub(crate) fn fft_padded(x: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let m = x.len().min(n);
    buf[..m].copy_from_slice(&x[..m]);
    fft_in_place(&mut buf);
    buf
}

/// Linear convolution, `len(a) + len(b) - 1` outputs.
pub(crate) fn linear_convolution(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    // direct sum is faster and exact for short kernels
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![Complex64::new(0.0, 0.0); out_len];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let mut fa = fft_padded(a, n);
    let fb = fft_padded(b, n);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    ifft_in_place(&mut fa);
    fa.truncate(out_len);
    fa
}
