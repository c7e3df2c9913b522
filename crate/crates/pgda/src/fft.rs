//! Real FFTs in one and two dimensions.
//!
//! Forward transforms use the convention `X_k = sum_j x_j e^{-2pi i jk/n}`
//! with no normalization; inverse transforms apply `1/n` per dimension.
//! Power-of-two lengths go through an iterative radix-2 Cooley-Tukey kernel
//! with cached twiddle factors; other lengths fall back to a direct O(n^2)
//! sum so the contract stays total.
//!
//! `irfft` treats its input as the half-spectrum of a real signal: the
//! imaginary parts of the DC and Nyquist bins are ignored (they cannot occur
//! for real data), which makes `irfft` a well-defined linear map on
//! arbitrary half-spectra. The adjoint helpers at the bottom implement the
//! exact transposes of these linear maps; reverse-mode gradients of the FFT
//! nodes are those adjoints rather than differentiated butterflies.

use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, Tensor};
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

/// Number of stored modes of a length-`n` real transform.
pub fn half_len(n: usize) -> usize {
    n / 2 + 1
}

// ---------------------------------------------------------------------------
// complex FFT kernel
// ---------------------------------------------------------------------------

struct Twiddles {
    // cos/sin pairs for e^{-2pi i k/n}, k = 0..n/2
    cos: Vec<f64>,
    sin: Vec<f64>,
}

fn twiddles_for(n: usize) -> Arc<Twiddles> {
    static CACHE: RwLock<Option<HashMap<usize, Arc<Twiddles>>>> = RwLock::new(None);
    if let Some(map) = CACHE.read().unwrap().as_ref() {
        if let Some(t) = map.get(&n) {
            return Arc::clone(t);
        }
    }
    let half = n / 2;
    let mut cos = Vec::with_capacity(half);
    let mut sin = Vec::with_capacity(half);
    for k in 0..half {
        let theta = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
        cos.push(theta.cos());
        sin.push(theta.sin());
    }
    let t = Arc::new(Twiddles { cos, sin });
    let mut guard = CACHE.write().unwrap();
    guard
        .get_or_insert_with(HashMap::new)
        .entry(n)
        .or_insert_with(|| Arc::clone(&t));
    Arc::clone(guard.as_ref().unwrap().get(&n).unwrap())
}

/// Unnormalized in-place complex FFT for power-of-two `n`.
/// `inverse` flips the exponent sign; no `1/n` is applied.
pub(crate) fn fft_inplace(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    if n < 2 {
        return;
    }
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 0..n - 1 {
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
        let mut mask = n >> 1;
        while j & mask != 0 {
            j &= !mask;
            mask >>= 1;
        }
        j |= mask;
    }
    let tw = twiddles_for(n);
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let (wr, wi) = {
                    let c = tw.cos[k * step];
                    let s = tw.sin[k * step];
                    if inverse {
                        (c, -s)
                    } else {
                        (c, s)
                    }
                };
                let a = start + k;
                let b = a + half;
                let tr = wr * re[b] - wi * im[b];
                let ti = wr * im[b] + wi * re[b];
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

/// Direct O(n^2) complex DFT, used for non-power-of-two lengths.
fn dft_direct(re: &[f64], im: &[f64], inverse: bool) -> (Vec<f64>, Vec<f64>) {
    let n = re.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    for k in 0..n {
        let mut sr = 0.0;
        let mut si = 0.0;
        for j in 0..n {
            let theta = sign * 2.0 * std::f64::consts::PI * (j * k % n) as f64 / n as f64;
            let (c, s) = (theta.cos(), theta.sin());
            sr += re[j] * c - im[j] * s;
            si += re[j] * s + im[j] * c;
        }
        out_re[k] = sr;
        out_im[k] = si;
    }
    (out_re, out_im)
}

fn fft_any(re: &mut Vec<f64>, im: &mut Vec<f64>, inverse: bool) {
    if re.len().is_power_of_two() {
        fft_inplace(re, im, inverse);
    } else {
        let (r, i) = dft_direct(re, im, inverse);
        *re = r;
        *im = i;
    }
}

// ---------------------------------------------------------------------------
// 1D real transforms
// ---------------------------------------------------------------------------

/// Forward real FFT: `n` samples to `n/2+1` stored modes.
pub fn rfft(x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Parameter(format!("rfft needs n >= 2, got {n}")));
    }
    let mut re = x.to_vec();
    let mut im = vec![0.0; n];
    fft_any(&mut re, &mut im, false);
    let h = half_len(n);
    re.truncate(h);
    im.truncate(h);
    Ok((re, im))
}

/// Inverse real FFT: `n/2+1` stored modes back to `n` samples, with `1/n`.
pub fn irfft(re: &[f64], im: &[f64], n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Parameter(format!("irfft needs n >= 2, got {n}")));
    }
    let h = half_len(n);
    if re.len() != h || im.len() != h {
        return Err(Error::Shape(format!(
            "irfft: expected {h} modes for n={n}, got {}",
            re.len()
        )));
    }
    // Hermitian extension; imaginary parts of DC and Nyquist are dropped.
    let mut fre = vec![0.0; n];
    let mut fim = vec![0.0; n];
    fre[0] = re[0];
    for k in 1..h {
        fre[k] = re[k];
        fim[k] = im[k];
        if k != n - k {
            fre[n - k] = re[k];
            fim[n - k] = -im[k];
        } else {
            fim[k] = 0.0;
        }
    }
    if n % 2 == 0 {
        fim[n / 2] = 0.0;
    }
    fft_any(&mut fre, &mut fim, true);
    let inv = 1.0 / n as f64;
    Ok(fre.iter().map(|v| v * inv).collect())
}

// ---------------------------------------------------------------------------
// 2D real transforms (square n x n grids, row-major)
// ---------------------------------------------------------------------------

/// Forward 2D real FFT of an `n x n` row-major grid.
/// Output is `n x (n/2+1)`: full spectrum along axis 0, half along axis 1.
pub fn rfft2(x: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 2 {
        return Err(Error::Parameter(format!("rfft2 needs n >= 2, got {n}")));
    }
    if x.len() != n * n {
        return Err(Error::Shape(format!(
            "rfft2: expected {} values, got {}",
            n * n,
            x.len()
        )));
    }
    let h = half_len(n);
    let mut re = vec![0.0; n * h];
    let mut im = vec![0.0; n * h];
    // rows first
    for r in 0..n {
        let (rr, ri) = rfft(&x[r * n..(r + 1) * n])?;
        re[r * h..(r + 1) * h].copy_from_slice(&rr);
        im[r * h..(r + 1) * h].copy_from_slice(&ri);
    }
    // then a full complex FFT down each stored column
    let mut cre = vec![0.0; n];
    let mut cim = vec![0.0; n];
    for c in 0..h {
        for r in 0..n {
            cre[r] = re[r * h + c];
            cim[r] = im[r * h + c];
        }
        fft_any(&mut cre, &mut cim, false);
        for r in 0..n {
            re[r * h + c] = cre[r];
            im[r * h + c] = cim[r];
        }
    }
    Ok((re, im))
}

/// Inverse of [`rfft2`], with `1/n^2` normalization.
pub fn irfft2(re: &[f64], im: &[f64], n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Parameter(format!("irfft2 needs n >= 2, got {n}")));
    }
    let h = half_len(n);
    if re.len() != n * h || im.len() != n * h {
        return Err(Error::Shape(format!(
            "irfft2: expected {} modes for n={n}, got {}",
            n * h,
            re.len()
        )));
    }
    // inverse complex FFT down each column (normalized by 1/n)...
    let mut wre = re.to_vec();
    let mut wim = im.to_vec();
    let mut cre = vec![0.0; n];
    let mut cim = vec![0.0; n];
    let inv = 1.0 / n as f64;
    for c in 0..h {
        for r in 0..n {
            cre[r] = wre[r * h + c];
            cim[r] = wim[r * h + c];
        }
        fft_any(&mut cre, &mut cim, true);
        for r in 0..n {
            wre[r * h + c] = cre[r] * inv;
            wim[r * h + c] = cim[r] * inv;
        }
    }
    // ...then a real inverse along each row
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        let row = irfft(&wre[r * h..(r + 1) * h], &wim[r * h..(r + 1) * h], n)?;
        out[r * n..(r + 1) * n].copy_from_slice(&row);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// adjoints (exact transposes of the linear maps above)
// ---------------------------------------------------------------------------

/// Adjoint of [`rfft`]: maps a cotangent on the stored half-spectrum back to
/// sample space. `g` entries are treated as independent real pairs.
pub fn rfft_adjoint(gre: &[f64], gim: &[f64], n: usize) -> Vec<f64> {
    let h = half_len(n);
    debug_assert_eq!(gre.len(), h);
    let mut fre = vec![0.0; n];
    let mut fim = vec![0.0; n];
    fre[..h].copy_from_slice(gre);
    fim[..h].copy_from_slice(gim);
    fft_any(&mut fre, &mut fim, true);
    fre
}

/// Adjoint of [`irfft`]: `grad_X_k = (w_k / n) * rfft(gx)_k` with Hermitian
/// weights `w_0 = w_{n/2} = 1`, otherwise 2; the DC/Nyquist imaginary slots
/// get zero (irfft never reads them).
pub fn irfft_adjoint(gx: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = gx.len();
    let (mut re, mut im) = rfft(gx)?;
    let h = half_len(n);
    let inv = 1.0 / n as f64;
    for k in 0..h {
        let w = hermitian_weight(k, n) * inv;
        re[k] *= w;
        im[k] *= w;
    }
    im[0] = 0.0;
    if n % 2 == 0 {
        im[n / 2] = 0.0;
    }
    Ok((re, im))
}

/// Adjoint of [`rfft2`].
pub fn rfft2_adjoint(gre: &[f64], gim: &[f64], n: usize) -> Vec<f64> {
    let h = half_len(n);
    debug_assert_eq!(gre.len(), n * h);
    let mut fre = vec![0.0; n * n];
    let mut fim = vec![0.0; n * n];
    for r in 0..n {
        fre[r * n..r * n + h].copy_from_slice(&gre[r * h..(r + 1) * h]);
        fim[r * n..r * n + h].copy_from_slice(&gim[r * h..(r + 1) * h]);
    }
    // full 2D inverse-exponent transform, unnormalized
    let mut cre = vec![0.0; n];
    let mut cim = vec![0.0; n];
    for c in 0..n {
        for r in 0..n {
            cre[r] = fre[r * n + c];
            cim[r] = fim[r * n + c];
        }
        fft_any(&mut cre, &mut cim, true);
        for r in 0..n {
            fre[r * n + c] = cre[r];
            fim[r * n + c] = cim[r];
        }
    }
    let mut out = vec![0.0; n * n];
    let mut rre = vec![0.0; n];
    let mut rim = vec![0.0; n];
    for r in 0..n {
        rre.copy_from_slice(&fre[r * n..(r + 1) * n]);
        rim.copy_from_slice(&fim[r * n..(r + 1) * n]);
        fft_any(&mut rre, &mut rim, true);
        for c in 0..n {
            out[r * n + c] = rre[c];
        }
    }
    out
}

/// Adjoint of [`irfft2`]: row-wise [`irfft_adjoint`] (which applies the
/// Hermitian weights and zeroes the DC/Nyquist imaginary slots that the
/// forward map never reads), then a column-wise forward DFT scaled by `1/n`.
/// The zeroing happens between the stages because the column transform
/// mixes real and imaginary parts.
pub fn irfft2_adjoint(gx: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if gx.len() != n * n {
        return Err(Error::Shape(format!(
            "irfft2_adjoint: expected {} values, got {}",
            n * n,
            gx.len()
        )));
    }
    let h = half_len(n);
    let mut re = vec![0.0; n * h];
    let mut im = vec![0.0; n * h];
    for r in 0..n {
        let (rr, ri) = irfft_adjoint(&gx[r * n..(r + 1) * n])?;
        re[r * h..(r + 1) * h].copy_from_slice(&rr);
        im[r * h..(r + 1) * h].copy_from_slice(&ri);
    }
    let inv = 1.0 / n as f64;
    let mut cre = vec![0.0; n];
    let mut cim = vec![0.0; n];
    for c in 0..h {
        for r in 0..n {
            cre[r] = re[r * h + c];
            cim[r] = im[r * h + c];
        }
        fft_any(&mut cre, &mut cim, false);
        for r in 0..n {
            re[r * h + c] = cre[r] * inv;
            im[r * h + c] = cim[r] * inv;
        }
    }
    Ok((re, im))
}

/// Weight of stored mode `k` in Parseval-style sums over the half-spectrum.
pub fn hermitian_weight(k: usize, n: usize) -> f64 {
    if k == 0 || (n % 2 == 0 && k == n / 2) {
        1.0
    } else {
        2.0
    }
}

// ---------------------------------------------------------------------------
// tensor-facing wrappers
// ---------------------------------------------------------------------------

/// [`rfft`] over a rank-1 tensor.
pub fn rfft_tensor(x: &Tensor) -> Result<ComplexTensor> {
    let (re, im) = rfft(x.data())?;
    ComplexTensor::new(vec![re.len()], re, im)
}

/// [`irfft`] to a rank-1 tensor of length `n`.
pub fn irfft_tensor(x: &ComplexTensor, n: usize) -> Result<Tensor> {
    Tensor::new(vec![n], irfft(x.re(), x.im(), n)?)
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn xorshift_vec(n: usize, mut state: u64) -> Vec<f64> {
        (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn rejects_too_short() {
        assert!(rfft(&[1.0]).is_err());
    }

    #[test]
    fn dc_component_of_ones() {
        let (re, im) = rfft(&[1.0; 8]).unwrap();
        assert!((re[0] - 8.0).abs() < 1e-12);
        for k in 0..5 {
            assert!(im[k].abs() < 1e-12);
            if k > 0 {
                assert!(re[k].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cosine_lands_in_single_mode() {
        let n = 8;
        let x: Vec<f64> = (0..n)
            .map(|j| (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos())
            .collect();
        let (re, im) = rfft(&x).unwrap();
        for k in 0..half_len(n) {
            let want = if k == 1 { 4.0 } else { 0.0 };
            assert!(
                (re[k] - want).abs() < 1e-12 && im[k].abs() < 1e-12,
                "mode {k}: {} + {}i",
                re[k],
                im[k]
            );
        }
    }

    #[test]
    fn matches_naive_dft() {
        for n in [8usize, 16, 32, 12] {
            let x = xorshift_vec(n, 7 + n as u64);
            let (re, im) = rfft(&x).unwrap();
            let (ore, oim) = dft_oracle::rfft_naive(&x);
            for k in 0..half_len(n) {
                assert!((re[k] - ore[k]).abs() < 1e-10, "n={n} k={k}");
                assert!((im[k] - oim[k]).abs() < 1e-10, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn roundtrip_32() {
        let x = xorshift_vec(32, 99);
        let (re, im) = rfft(&x).unwrap();
        let y = irfft(&re, &im, 32).unwrap();
        let err = x
            .iter()
            .zip(&y)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-12, "roundtrip error {err}");
    }

    #[test]
    fn roundtrip_all_acceptance_sizes() {
        for n in [8usize, 16, 32, 64] {
            let x = xorshift_vec(n, n as u64);
            let (re, im) = rfft(&x).unwrap();
            let y = irfft(&re, &im, n).unwrap();
            let err = x
                .iter()
                .zip(&y)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-12, "n={n} err={err}");
        }
    }

    #[test]
    fn parseval_identity() {
        let n = 32;
        let x = xorshift_vec(n, 4242);
        let (re, im) = rfft(&x).unwrap();
        let time: f64 = x.iter().map(|v| v * v).sum();
        let freq: f64 = (0..half_len(n))
            .map(|k| hermitian_weight(k, n) * (re[k] * re[k] + im[k] * im[k]))
            .sum::<f64>()
            / n as f64;
        assert!((time - freq).abs() < 1e-10, "{time} vs {freq}");
    }

    #[test]
    fn rfft2_roundtrip_and_dc() {
        let n = 16;
        let x = xorshift_vec(n * n, 11);
        let (re, im) = rfft2(&x, n).unwrap();
        let back = irfft2(&re, &im, n).unwrap();
        let err = x
            .iter()
            .zip(&back)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-12, "2d roundtrip error {err}");

        let ones = vec![1.0; n * n];
        let (re, im) = rfft2(&ones, n).unwrap();
        assert!((re[0] - (n * n) as f64).abs() < 1e-9);
        let rest: f64 = re[1..].iter().chain(im.iter()).map(|v| v.abs()).sum();
        assert!(rest < 1e-9);
    }

    /// <A x, y> == <x, A^T y> for every transform/adjoint pair.
    #[test]
    fn adjoint_inner_product_identities() {
        let n = 16;
        let h = half_len(n);
        let x = xorshift_vec(n, 1);
        let gre = xorshift_vec(h, 2);
        let gim = xorshift_vec(h, 3);
        let (fre, fim) = rfft(&x).unwrap();
        let lhs: f64 = (0..h).map(|k| fre[k] * gre[k] + fim[k] * gim[k]).sum();
        let adj = rfft_adjoint(&gre, &gim, n);
        let rhs: f64 = (0..n).map(|j| x[j] * adj[j]).sum();
        assert!((lhs - rhs).abs() < 1e-10, "rfft adjoint: {lhs} vs {rhs}");

        let gx = xorshift_vec(n, 4);
        let y = irfft(&fre, &fim, n).unwrap();
        let lhs: f64 = (0..n).map(|j| y[j] * gx[j]).sum();
        let (are, aim) = irfft_adjoint(&gx).unwrap();
        let rhs: f64 = (0..h).map(|k| fre[k] * are[k] + fim[k] * aim[k]).sum();
        assert!((lhs - rhs).abs() < 1e-10, "irfft adjoint: {lhs} vs {rhs}");

        // 2D pairs
        let x2 = xorshift_vec(n * n, 5);
        let g2re = xorshift_vec(n * h, 6);
        let g2im = xorshift_vec(n * h, 7);
        let (f2re, f2im) = rfft2(&x2, n).unwrap();
        let lhs: f64 = (0..n * h)
            .map(|k| f2re[k] * g2re[k] + f2im[k] * g2im[k])
            .sum();
        let adj2 = rfft2_adjoint(&g2re, &g2im, n);
        let rhs: f64 = (0..n * n).map(|j| x2[j] * adj2[j]).sum();
        assert!((lhs - rhs).abs() < 1e-9, "rfft2 adjoint: {lhs} vs {rhs}");

        let gx2 = xorshift_vec(n * n, 8);
        let y2 = irfft2(&f2re, &f2im, n).unwrap();
        let lhs: f64 = (0..n * n).map(|j| y2[j] * gx2[j]).sum();
        let (a2re, a2im) = irfft2_adjoint(&gx2, n).unwrap();
        let rhs: f64 = (0..n * h)
            .map(|k| f2re[k] * a2re[k] + f2im[k] * a2im[k])
            .sum();
        assert!((lhs - rhs).abs() < 1e-9, "irfft2 adjoint: {lhs} vs {rhs}");
    }

    proptest! {
        #[test]
        fn roundtrip_random(seed in 0u64..1000, pow in 3u32..7) {
            let n = 1usize << pow;
            let x = xorshift_vec(n, seed.wrapping_add(1));
            let (re, im) = rfft(&x).unwrap();
            let y = irfft(&re, &im, n).unwrap();
            for (a, b) in x.iter().zip(&y) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn rfft_is_linear(seed in 0u64..1000) {
            let n = 32usize;
            let x = xorshift_vec(n, seed.wrapping_add(11));
            let y = xorshift_vec(n, seed.wrapping_add(97));
            let (a, b) = (1.7, -0.3);
            let mixed: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
            let (mre, mim) = rfft(&mixed).unwrap();
            let (xre, xim) = rfft(&x).unwrap();
            let (yre, yim) = rfft(&y).unwrap();
            for k in 0..half_len(n) {
                prop_assert!((mre[k] - (a * xre[k] + b * yre[k])).abs() < 1e-12);
                prop_assert!((mim[k] - (a * xim[k] + b * yim[k])).abs() < 1e-12);
            }
        }
    }
}
