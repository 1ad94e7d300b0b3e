//! M-MMSE receive combining, uplink SINR and spectral efficiency.
//!
//! All quantities are normalized by the (common) uplink power `p`, so the
//! noise enters as `sigma^2 / p`.

use std::io::Write;

use nalgebra::Cholesky;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

/// `Z = sum_n C_n + (sigma^2 / p) I` from the estimation-error covariances
/// of every device seen by one BS.
pub fn residual_covariance<'a>(
    error_covs: impl IntoIterator<Item = &'a CMat>,
    antennas: usize,
    noise_var: f64,
    power: f64,
) -> CMat {
    let mut z = CMat::zeros(antennas, antennas);
    for c in error_covs {
        z += c;
    }
    let n = noise_var / power;
    for a in 0..antennas {
        z[(a, a)] += n;
    }
    z
}

/// Combining vectors of one cell's devices.
#[derive(Debug, Clone)]
pub struct CombinerSet {
    /// Column `c` combines the device in `own[c]`.
    pub v: CMat,
    pub z: CMat,
}

/// `V = (G_hat G_hat^H + Z)^-1 G_hat[:, own]` where `g_hat` holds the
/// estimates of every device (all cells) as seen by this BS.
pub fn mmmse_combiner(g_hat: &CMat, own: &[usize], z: &CMat) -> Result<CombinerSet> {
    let m = z.nrows();
    if g_hat.nrows() != m {
        return Err(Error::domain("estimate and covariance dimensions differ"));
    }
    let a = g_hat * g_hat.adjoint() + z;
    let chol = Cholesky::new(a).ok_or_else(|| Error::Numerical("combiner matrix is singular".into()))?;
    let rhs = CMat::from_fn(m, own.len(), |r, c| g_hat[(r, own[c])]);
    Ok(CombinerSet {
        v: chol.solve(&rhs),
        z: z.clone(),
    })
}

/// Same combiner when `Z` is diagonal. With fewer devices than antennas
/// it goes through the Woodbury identity `V = D G (I + G^H D G)^-1 [:, own]`
/// with `D = Z^-1`, which costs O(M N^2) instead of O(M^3).
pub fn mmmse_combiner_diagonal(g_hat: &CMat, own: &[usize], z_diag: &[f64]) -> Result<CMat> {
    let m = g_hat.nrows();
    let n = g_hat.ncols();
    if z_diag.len() != m {
        return Err(Error::domain("estimate and covariance dimensions differ"));
    }
    if n >= m {
        let z = CMat::from_diagonal(&CVec::from_iterator(m, z_diag.iter().map(|&d| Complex64::new(d, 0.0))));
        return Ok(mmmse_combiner(g_hat, own, &z)?.v);
    }
    let dg = CMat::from_fn(m, n, |r, c| g_hat[(r, c)] / z_diag[r]);
    let mut s = g_hat.adjoint() * &dg;
    for i in 0..n {
        s[(i, i)] += Complex64::new(1.0, 0.0);
    }
    let chol = Cholesky::new(s).ok_or_else(|| Error::Numerical("combiner matrix is singular".into()))?;
    let e = CMat::from_fn(n, own.len(), |r, c| {
        if r == own[c] {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    Ok(dg * chol.solve(&e))
}

/// True channels of every transmitting device at one BS.
#[derive(Debug, Clone)]
pub struct ReceivedSet {
    /// Column `n` is device `n`'s channel.
    pub g: CMat,
    /// Cell of each device.
    pub cell: Vec<usize>,
    pub power: Vec<f64>,
}

/// Terms of the SINR ratio.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SinrBreakdown {
    pub desired: f64,
    /// Interference from other devices of the same cell.
    pub intracell: f64,
    /// Interference from devices of other cells.
    pub intercell: f64,
    pub noise: f64,
}

impl SinrBreakdown {
    pub fn interference(&self) -> f64 {
        self.intracell + self.intercell
    }

    pub fn gamma(&self) -> f64 {
        self.desired / (self.interference() + self.noise)
    }
}

fn breakdown(v_sq: f64, proj: &CVec, set: &ReceivedSet, target: usize, noise_var: f64) -> SinrBreakdown {
    let own_cell = set.cell[target];
    let mut out = SinrBreakdown {
        noise: noise_var * v_sq,
        ..Default::default()
    };
    for (n, z) in proj.iter().enumerate() {
        let pw = set.power[n] * z.norm_sqr();
        if n == target {
            out.desired = pw;
        } else if set.cell[n] == own_cell {
            out.intracell += pw;
        } else {
            out.intercell += pw;
        }
    }
    out
}

/// SINR of device `target` with combiner `v` for one channel realization.
pub fn uplink_sinr(v: &CVec, set: &ReceivedSet, target: usize, noise_var: f64) -> Result<SinrBreakdown> {
    let v_sq = v.norm_squared();
    if !(v_sq > 0.0) {
        return Err(Error::domain("combining vector has zero norm"));
    }
    let proj = set.g.adjoint() * v;
    Ok(breakdown(v_sq, &proj, set, target, noise_var))
}

/// SINR of every combined device: `targets[c]` is the device in `set`
/// combined by column `c` of `v`.
pub fn uplink_sinr_all(v: &CMat, set: &ReceivedSet, targets: &[usize], noise_var: f64) -> Result<Vec<SinrBreakdown>> {
    let proj = set.g.adjoint() * v;
    targets
        .iter()
        .enumerate()
        .map(|(c, &t)| {
            let v_sq = v.column(c).norm_squared();
            if !(v_sq > 0.0) {
                return Err(Error::domain("combining vector has zero norm"));
            }
            Ok(breakdown(v_sq, &proj.column(c).into_owned(), set, t, noise_var))
        })
        .collect()
}

/// `prelog * mean(log2(1 + gamma))`.
pub fn spectral_efficiency(sinr: &[f64], tau_c: usize, tau_p: usize) -> Result<f64> {
    if sinr.is_empty() {
        return Err(Error::domain("no SINR samples"));
    }
    if tau_p > tau_c || tau_c == 0 {
        return Err(Error::domain("pilot length exceeds the coherence block"));
    }
    let prelog = (tau_c - tau_p) as f64 / tau_c as f64;
    Ok(prelog * mean_rate(sinr))
}

fn mean_rate(sinr: &[f64]) -> f64 {
    sinr.iter().map(|g| (1.0 + g).log2()).sum::<f64>() / sinr.len() as f64
}

/// SINR samples of every device and the SE they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct SeReport {
    pub prelog: f64,
    /// `sinr_samples[cell][device]`.
    pub sinr_samples: Vec<Vec<Vec<f64>>>,
}

/// Labels attached to each CSV row.
#[derive(Debug, Clone, Serialize)]
pub struct SeLabels {
    pub antennas: usize,
    pub devices: usize,
    pub clusters: usize,
    pub scheme: String,
}

#[derive(Serialize)]
struct SeRow<'a> {
    cell: usize,
    device: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "C")]
    c: usize,
    scheme: &'a str,
    se_bps_hz: String,
}

impl SeReport {
    pub fn new(cells: usize, devices: usize, prelog: f64) -> Self {
        Self {
            prelog,
            sinr_samples: vec![vec![Vec::new(); devices]; cells],
        }
    }

    pub fn push(&mut self, cell: usize, device: usize, gamma: f64) {
        self.sinr_samples[cell][device].push(gamma);
    }

    /// Concatenates the samples of `other`; order of merging does not
    /// change the resulting SE.
    pub fn merge(&mut self, other: &SeReport) -> Result<()> {
        if self.prelog != other.prelog
            || self.sinr_samples.len() != other.sinr_samples.len()
            || self
                .sinr_samples
                .iter()
                .zip(&other.sinr_samples)
                .any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::domain("merging reports of different shapes"));
        }
        for (a, b) in self.sinr_samples.iter_mut().zip(&other.sinr_samples) {
            for (x, y) in a.iter_mut().zip(b) {
                x.extend_from_slice(y);
            }
        }
        Ok(())
    }

    /// SE of each device; devices without samples get 0.
    pub fn per_device_se(&self) -> Vec<Vec<f64>> {
        self.sinr_samples
            .iter()
            .map(|cell| {
                cell.iter()
                    .map(|s| if s.is_empty() { 0.0 } else { self.prelog * mean_rate(s) })
                    .collect()
            })
            .collect()
    }

    pub fn per_cell_se(&self) -> Vec<f64> {
        self.per_device_se().iter().map(|c| c.iter().sum()).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W, labels: &SeLabels) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (cell, devs) in self.per_device_se().iter().enumerate() {
            for (device, se) in devs.iter().enumerate() {
                w.serialize(SeRow {
                    cell,
                    device,
                    m: labels.antennas,
                    k: labels.devices,
                    c: labels.clusters,
                    scheme: &labels.scheme,
                    se_bps_hz: format!("{se:.6}"),
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cn01, cn_vector, min_eigenvalue};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn perfect_csi_leaves_noise_only() {
        let zero = CMat::zeros(3, 3);
        let z = residual_covariance([&zero, &zero], 3, 2.0, 4.0);
        assert_eq!(z, CMat::identity(3, 3) * c(0.5));
    }

    #[test]
    fn scalar_residual() {
        let e = CMat::from_element(1, 1, c(0.3));
        let z = residual_covariance([&e], 1, 0.1, 2.0);
        assert!((z[(0, 0)].re - 0.35).abs() < 1e-15);
    }

    #[test]
    fn residual_minus_noise_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let errs: Vec<CMat> = (0..4)
            .map(|_| {
                let a = CMat::from_fn(4, 2, |_, _| cn01(&mut rng));
                &a * a.adjoint()
            })
            .collect();
        let z = residual_covariance(&errs, 4, 1.0, 1.0);
        let shifted = z - CMat::identity(4, 4);
        assert!(min_eigenvalue(&shifted) > -1e-12);
    }

    #[test]
    fn scalar_combiner_is_scalar_mmse() {
        let g = Complex64::new(0.7, -0.4);
        let (p, sigma2) = (3.0, 0.5);
        let gh = CMat::from_element(1, 1, g);
        let z = CMat::from_element(1, 1, c(sigma2 / p));
        let v = mmmse_combiner(&gh, &[0], &z).unwrap().v;
        let want = g * p / (p * g.norm_sqr() + sigma2);
        assert!((v[(0, 0)] - want).norm() < 1e-14);
    }

    #[test]
    fn combiner_scales_inversely_and_keeps_sinr() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gh = CMat::from_fn(4, 3, |_, _| cn01(&mut rng));
        let z = CMat::identity(4, 4) * c(0.3);
        let s: f64 = 7.5;
        let v1 = mmmse_combiner(&gh, &[0, 1], &z).unwrap().v;
        let v2 = mmmse_combiner(&(&gh * c(s.sqrt())), &[0, 1], &(&z * c(s))).unwrap().v;
        assert!((&v1 - &v2 * c(s.sqrt())).norm() < 1e-10 * v1.norm());
        let set = ReceivedSet {
            g: gh.clone(),
            cell: vec![0, 0, 1],
            power: vec![1.0; 3],
        };
        let a = uplink_sinr(&v1.column(0).into_owned(), &set, 0, 0.3).unwrap();
        let b = uplink_sinr(&v2.column(0).into_owned(), &set, 0, 0.3).unwrap();
        assert!((a.gamma() - b.gamma()).abs() < 1e-10 * a.gamma());
    }

    #[test]
    fn zero_forcing_limit() {
        // orthogonal estimates, M >= LK, vanishing noise
        let m = 6;
        let gh = CMat::from_fn(m, 4, |r, c| if r == c { Complex64::new(1.0 + r as f64, 0.5) } else { c0() });
        let z = CMat::identity(m, m) * c(1e-8);
        let v = mmmse_combiner(&gh, &[0, 1, 2, 3], &z).unwrap().v;
        let cross = v.adjoint() * &gh;
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    assert!(cross[(a, b)].norm() <= 1e-4 * cross[(a, a)].norm());
                }
            }
        }
    }

    fn c0() -> Complex64 {
        Complex64::new(0.0, 0.0)
    }

    #[test]
    fn woodbury_matches_direct_for_diagonal_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gh = CMat::from_fn(8, 5, |_, _| cn01(&mut rng));
        let d: Vec<f64> = (0..8).map(|i| 0.1 + 0.05 * i as f64).collect();
        let z = CMat::from_diagonal(&CVec::from_iterator(8, d.iter().map(|&x| c(x))));
        let direct = mmmse_combiner(&gh, &[1, 3], &z).unwrap().v;
        let fast = mmmse_combiner_diagonal(&gh, &[1, 3], &d).unwrap();
        assert!((&direct - &fast).norm() < 1e-10 * direct.norm());
    }

    #[test]
    fn diagonal_combiner_with_more_devices_than_antennas() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gh = CMat::from_fn(4, 9, |_, _| cn01(&mut rng));
        let d = [0.2, 0.3, 0.5, 0.7];
        let fast = mmmse_combiner_diagonal(&gh, &[0, 6], &d).unwrap();
        // Woodbury form evaluated explicitly
        let dg = CMat::from_fn(4, 9, |r, col| gh[(r, col)] / d[r]);
        let s = CMat::identity(9, 9) + gh.adjoint() * &dg;
        let inv = s.try_inverse().unwrap();
        let wood = CMat::from_fn(4, 2, |r, col| (&dg * &inv)[(r, [0, 6][col])]);
        assert!((&wood - &fast).norm() < 1e-9 * wood.norm());
    }

    #[test]
    fn matched_filter_single_user() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = cn_vector(&mut rng, 5, 1.0);
        let v = &g / c(g.norm());
        let set = ReceivedSet {
            g: CMat::from_columns(&[g.clone()]),
            cell: vec![0],
            power: vec![2.0],
        };
        let s = uplink_sinr(&v, &set, 0, 0.25).unwrap();
        assert!((s.gamma() - 2.0 * g.norm_squared() / 0.25).abs() < 1e-10);
    }

    #[test]
    fn orthogonal_combiner_kills_signal() {
        let g = CVec::from_vec(vec![c(1.0), c0()]);
        let v = CVec::from_vec(vec![c0(), c(1.0)]);
        let set = ReceivedSet {
            g: CMat::from_columns(&[g]),
            cell: vec![0],
            power: vec![1.0],
        };
        assert_eq!(uplink_sinr(&v, &set, 0, 1.0).unwrap().gamma(), 0.0);
        assert!(uplink_sinr(&CVec::zeros(2), &set, 0, 1.0).is_err());
    }

    #[test]
    fn two_user_scalar_by_hand() {
        // v = 2, g1 = 1 + i, g2 = 0.5, p = (1, 4), sigma^2 = 0.1
        let set = ReceivedSet {
            g: CMat::from_row_slice(1, 2, &[Complex64::new(1.0, 1.0), c(0.5)]),
            cell: vec![0, 1],
            power: vec![1.0, 4.0],
        };
        let s = uplink_sinr(&CVec::from_element(1, c(2.0)), &set, 0, 0.1).unwrap();
        // desired 1*|2(1+i)|^2 = 8; interference 4*|1|^2 = 4; noise 0.1*4 = 0.4
        assert!((s.gamma() - 8.0 / 4.4).abs() < 1e-14);
        assert_eq!(s.intracell, 0.0);
        assert!((s.intercell - 4.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_efficiency_arithmetic() {
        assert!((spectral_efficiency(&[1.0, 1.0], 200, 100).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(spectral_efficiency(&[0.0; 4], 200, 7).unwrap(), 0.0);
        assert!((spectral_efficiency(&[1.0, 3.0], 10, 0).unwrap() - 1.5).abs() < 1e-15);
        assert!(spectral_efficiency(&[], 200, 7).is_err());
    }

    #[test]
    fn report_merge_and_csv() {
        let mut a = SeReport::new(2, 2, 0.5);
        a.push(0, 0, 1.0);
        a.push(1, 1, 3.0);
        let mut b = SeReport::new(2, 2, 0.5);
        b.push(0, 0, 3.0);
        b.push(0, 1, 1.0);
        let mut ab = a.clone();
        ab.merge(&b).unwrap();
        let mut ba = b.clone();
        ba.merge(&a).unwrap();
        assert_eq!(ab.per_device_se(), ba.per_device_se());
        assert_eq!(ab.per_device_se(), vec![vec![0.75, 0.5], vec![0.0, 1.0]]);
        assert_eq!(ab.per_cell_se(), vec![1.25, 1.0]);
        assert!(ab.merge(&SeReport::new(1, 2, 0.5)).is_err());

        let mut buf = Vec::new();
        let labels = SeLabels {
            antennas: 64,
            devices: 2,
            clusters: 2,
            scheme: "ilp".into(),
        };
        ab.write_csv(&mut buf, &labels).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "cell,device,M,K,C,scheme,se_bps_hz");
        assert_eq!(lines[1], "0,0,64,2,2,ilp,0.750000");
        assert_eq!(lines.len(), 5);
    }

    proptest! {
        #[test]
        fn se_never_grows_with_pilot_length(samples in prop::collection::vec(0.0f64..100.0, 1..20), tp in 0usize..199) {
            let a = spectral_efficiency(&samples, 200, tp).unwrap();
            let b = spectral_efficiency(&samples, 200, tp + 1).unwrap();
            prop_assert!(b <= a && b >= 0.0);
        }

        #[test]
        fn interference_terms_are_additive(seed in 0u64..5000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 6;
            let set = ReceivedSet {
                g: CMat::from_fn(4, n, |_, _| cn01(&mut rng)),
                cell: vec![0, 0, 1, 1, 2, 0],
                power: (0..n).map(|i| 0.5 + i as f64).collect(),
            };
            let v = cn_vector(&mut rng, 4, 1.0);
            let s = uplink_sinr(&v, &set, 1, 0.2).unwrap();
            let proj = set.g.adjoint() * &v;
            let total: f64 = (0..n).filter(|&i| i != 1).map(|i| set.power[i] * proj[i].norm_sqr()).sum();
            prop_assert!((s.interference() - total).abs() <= 1e-10 * total);
            let all = uplink_sinr_all(&CMat::from_columns(&[v.clone()]), &set, &[1], 0.2).unwrap();
            prop_assert!((all[0].gamma() - s.gamma()).abs() <= 1e-12 * s.gamma().max(1.0));
        }
    }
}
