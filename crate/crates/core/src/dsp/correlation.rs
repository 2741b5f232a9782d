use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::fft::FftPair;

/// Circular cross-correlation `r[τ] = Σ_m x[(m+τ) mod n]·conj(y[m])` through
/// the DFT.
pub fn circular_xcorr(x: &[Complex64], y: &[Complex64]) -> Result<Vec<Complex64>> {
    check(x, y)?;
    let fft = FftPair::new(x.len());
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    fft.forward(&mut a);
    fft.forward(&mut b);
    a.iter_mut().zip(&b).for_each(|(p, q)| *p *= q.conj());
    fft.inverse(&mut a);
    Ok(a)
}

/// O(n²) evaluation of [`circular_xcorr`].
pub fn circular_xcorr_direct(x: &[Complex64], y: &[Complex64]) -> Result<Vec<Complex64>> {
    check(x, y)?;
    let n = x.len();
    Ok((0..n).map(|tau| (0..n).map(|m| x[(m + tau) % n] * y[m].conj()).sum()).collect())
}

fn check(x: &[Complex64], y: &[Complex64]) -> Result<()> {
    if x.is_empty() || x.len() != y.len() {
        return invalid(format!("correlation needs equal non-zero lengths, got {} and {}", x.len(), y.len()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fft_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 7, 64, 255, 256] {
            let x: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.random(), rng.random())).collect();
            let y: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.random(), rng.random())).collect();
            let a = circular_xcorr(&x, &y).unwrap();
            let b = circular_xcorr_direct(&x, &y).unwrap();
            let rms = (a.iter().zip(&b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>() / n as f64).sqrt();
            assert!(rms < 1e-9, "n {n}: {rms}");
        }
        assert!(circular_xcorr(&[], &[]).is_err());
    }
}
