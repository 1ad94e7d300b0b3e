//! Spatially correlated Rayleigh channels, pilot despreading and MMSE
//! channel estimation.
//!
//! Every device-to-BS link has a correlation matrix `R` with
//! `tr(R) / M = beta`. Devices in different cells may share a pilot; the
//! despread observation of a pilot at a BS is the sum of the co-pilot
//! channels plus noise, and the MMSE estimate is `R Q^-1 y_hat` with `Q`
//! the normalized covariance of that observation.

use std::io::Write;

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::{cn01, psd_factor, trace_re, CMat, CVec, ZERO};

/// Which link a correlation matrix describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LinkId {
    /// Cell of the device.
    pub cell: usize,
    pub device: usize,
    /// Observing base station.
    pub bs: usize,
}

/// First column of a Hermitian Toeplitz correlation matrix:
/// `R[m][n] = col[m - n]` for `m >= n`, conjugate above the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzCorrelation {
    pub col: Vec<Complex64>,
}

impl ToeplitzCorrelation {
    pub fn antennas(&self) -> usize {
        self.col.len()
    }

    /// Entry `R[m][n]` for lag `d = m - n`.
    pub fn lag(&self, d: isize) -> Complex64 {
        if d >= 0 {
            self.col[d as usize]
        } else {
            self.col[(-d) as usize].conj()
        }
    }

    pub fn trace(&self) -> f64 {
        self.col.first().map_or(0.0, |z| z.re) * self.col.len() as f64
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            col: self.col.iter().map(|z| z * s).collect(),
        }
    }

    pub fn to_dense(&self) -> CMat {
        let m = self.col.len();
        CMat::from_fn(m, m, |a, b| self.lag(a as isize - b as isize))
    }

    /// `Re tr(A B^H)` computed from the two first columns in O(M).
    pub fn trace_inner(&self, other: &ToeplitzCorrelation) -> f64 {
        let m = self.col.len();
        let mut acc = (m as f64) * (self.col[0] * other.col[0].conj()).re;
        for d in 1..m {
            // lags +d and -d each appear M - d times; the -d terms are the
            // conjugates of the +d terms, so their real parts agree
            acc += 2.0 * (m - d) as f64 * (self.col[d] * other.col[d].conj()).re;
        }
        acc
    }

    pub fn frobenius(&self) -> f64 {
        self.trace_inner(self).max(0.0).sqrt()
    }

    /// Diagonal of `F R F^H` for the unitary M-point DFT `F`: the average
    /// power the channel puts into each DFT beam. Sums to `tr(R)`.
    pub fn beam_powers(&self) -> Vec<f64> {
        let m = self.col.len();
        if m == 0 {
            return Vec::new();
        }
        // lambda_q = (1/M) sum_{|d|<M} (M - |d|) r[d] e^{-j 2 pi q d / M};
        // fold the lags modulo M and take one forward FFT
        let mut c = vec![ZERO; m];
        c[0] = self.col[0];
        for d in 1..m {
            let w = (m - d) as f64 / m as f64;
            c[d] += self.col[d] * w;
            c[m - d] += self.col[d].conj() * w;
        }
        FftPlanner::new().plan_fft_forward(m).process(&mut c);
        c.iter().map(|z| z.re.max(0.0)).collect()
    }
}

/// Gaussian local-scattering correlation for a half-wavelength-style ULA,
/// normalized to unit diagonal (trace `M`).
pub fn local_scattering_profile(
    nominal_angle_rad: f64,
    asd_rad: f64,
    antennas: usize,
    spacing: f64,
) -> ToeplitzCorrelation {
    let two_pi = std::f64::consts::TAU;
    let col = (0..antennas)
        .map(|d| {
            let d = d as f64;
            let phase = two_pi * spacing * d * nominal_angle_rad.sin();
            let spread = two_pi * spacing * d * nominal_angle_rad.cos();
            Complex64::from_polar((-0.5 * asd_rad * asd_rad * spread * spread).exp(), phase)
        })
        .collect();
    ToeplitzCorrelation { col }
}

/// Hermitian PSD spatial correlation of one link, with `beta = tr(R) / M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub r: CMat,
    pub beta: f64,
    pub owner: LinkId,
}

impl CorrelationMatrix {
    pub fn new(r: CMat, owner: LinkId) -> Self {
        let beta = trace_re(&r) / r.nrows().max(1) as f64;
        Self { r, beta, owner }
    }

    pub fn antennas(&self) -> usize {
        self.r.nrows()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            r: &self.r * Complex64::new(s, 0.0),
            beta: self.beta * s,
            owner: self.owner,
        }
    }
}

/// Unit-gain local-scattering correlation (`tr(R) = M`); scale by beta.
pub fn local_scattering_correlation(
    nominal_angle_rad: f64,
    asd_rad: f64,
    antennas: usize,
    spacing: f64,
) -> CorrelationMatrix {
    let t = local_scattering_profile(nominal_angle_rad, asd_rad, antennas, spacing);
    CorrelationMatrix::new(t.to_dense(), LinkId::default())
}

/// Draws channels `g ~ CN(0, R)` through a low-rank factor of `R`.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    factor: CMat,
}

impl ChannelSampler {
    pub fn new(r: &CMat) -> Self {
        Self {
            factor: psd_factor(r, 1e-13),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> CVec {
        let w = CVec::from_fn(self.factor.ncols(), |_, _| cn01(rng));
        &self.factor * w
    }
}

/// Orthogonal pilot sequences (DFT basis) and the pilot used by each device.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    pub sequences: Vec<CVec>,
    /// `assignment[cell][device]` is a pilot index.
    pub assignment: Vec<Vec<usize>>,
}

impl PilotBook {
    pub fn new(tau_p: usize, assignment: Vec<Vec<usize>>) -> Result<Self> {
        if tau_p == 0 {
            return Err(Error::domain("pilot length must be positive"));
        }
        if let Some(&bad) = assignment.iter().flatten().find(|&&p| p >= tau_p) {
            return Err(Error::domain(format!("pilot index {bad} out of range for length {tau_p}")));
        }
        let sequences = (0..tau_p)
            .map(|p| {
                CVec::from_fn(tau_p, |t, _| {
                    Complex64::from_polar(1.0, std::f64::consts::TAU * (p * t) as f64 / tau_p as f64)
                })
            })
            .collect();
        Ok(Self {
            sequences,
            assignment,
        })
    }

    pub fn tau_p(&self) -> usize {
        self.sequences.len()
    }

    pub fn pilot(&self, cell: usize, device: usize) -> usize {
        self.assignment[cell][device]
    }

    /// Devices `(cell, device)` that send pilot `p`.
    pub fn copilots(&self, p: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, cell) in self.assignment.iter().enumerate() {
            for (k, &q) in cell.iter().enumerate() {
                if q == p {
                    out.push((i, k));
                }
            }
        }
        out
    }
}

/// Pilot phase at every BS: `channels[i][k][j]` is the channel of device
/// `k` in cell `i` seen by BS `j`, `powers[i][k]` its pilot power. Returns
/// `y[j][p]`, the received pilot block at BS `j` multiplied by the
/// conjugate of pilot `p`.
pub fn despread_pilots<R: Rng + ?Sized>(
    channels: &[Vec<Vec<CVec>>],
    book: &PilotBook,
    powers: &[Vec<f64>],
    noise_var: f64,
    rng: &mut R,
) -> Vec<Vec<CVec>> {
    let tau = book.tau_p();
    let bs_count = channels.first().and_then(|c| c.first()).map_or(0, Vec::len);
    let m = channels
        .iter()
        .flatten()
        .flatten()
        .next()
        .map_or(0, |g| g.len());
    (0..bs_count)
        .map(|j| {
            // Y_j = sum sqrt(p) g phi^T + N
            let mut y = CMat::zeros(m, tau);
            for (i, cell) in channels.iter().enumerate() {
                for (k, links) in cell.iter().enumerate() {
                    let phi = &book.sequences[book.pilot(i, k)];
                    let amp = Complex64::new(powers[i][k].sqrt(), 0.0);
                    let g = &links[j];
                    for t in 0..tau {
                        let w = amp * phi[t];
                        for a in 0..m {
                            y[(a, t)] += g[a] * w;
                        }
                    }
                }
            }
            let sd = noise_var.sqrt();
            for z in y.iter_mut() {
                *z += cn01(rng) * sd;
            }
            book.sequences
                .iter()
                .map(|phi| &y * phi.map(|z| z.conj()))
                .collect()
        })
        .collect()
}

/// MMSE estimate of one channel.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    pub g_hat: CVec,
    /// Covariance of the normalized observation `y / (sqrt(p) tau_p)`.
    pub q: CMat,
    pub error_cov: CMat,
    pub y: CVec,
}

/// The linear part of an MMSE estimator, reusable across realizations.
#[derive(Debug, Clone)]
pub struct MmseFilter {
    /// `R Q^-1`.
    pub gain: CMat,
    pub q: CMat,
    pub error_cov: CMat,
    /// `sqrt(p) * tau_p`: the observation is divided by this first.
    pub scale: f64,
}

/// Normalized observation covariance
/// `Q = R + sum_c (p_c / p) R_c + sigma^2 / (tau_p p) I`.
pub fn observation_covariance(
    r: &CMat,
    copilots: &[(&CMat, f64)],
    power: f64,
    noise_var: f64,
    tau_p: usize,
) -> CMat {
    let m = r.nrows();
    let mut q = r.clone();
    for (rc, pc) in copilots {
        q += *rc * Complex64::new(pc / power, 0.0);
    }
    let n = noise_var / (tau_p as f64 * power);
    for a in 0..m {
        q[(a, a)] += n;
    }
    q
}

fn cholesky(q: &CMat) -> Result<Cholesky<Complex64, nalgebra::Dyn>> {
    Cholesky::new(q.clone()).ok_or_else(|| Error::Numerical("observation covariance is singular".into()))
}

/// `R - R Q^-1 R`, kept exactly Hermitian by forming `X^H X` with `X = L^-1 R`.
fn error_covariance(r: &CMat, chol: &Cholesky<Complex64, nalgebra::Dyn>) -> CMat {
    scaled_error_covariance(r, chol, 1.0)
}

/// `R - s R Q^-1 R`.
fn scaled_error_covariance(r: &CMat, chol: &Cholesky<Complex64, nalgebra::Dyn>, s: f64) -> CMat {
    let x = chol
        .l_dirty()
        .solve_lower_triangular(r)
        .expect("Cholesky factor has a positive diagonal");
    let mut e = r - x.adjoint() * x * Complex64::new(s, 0.0);
    let n = e.nrows();
    for a in 0..n {
        for b in a + 1..n {
            let v = (e[(a, b)] + e[(b, a)].conj()) * 0.5;
            e[(a, b)] = v;
            e[(b, a)] = v.conj();
        }
        e[(a, a)].im = 0.0;
    }
    e
}

impl MmseFilter {
    pub fn new(
        r: &CMat,
        copilots: &[(&CMat, f64)],
        power: f64,
        noise_var: f64,
        tau_p: usize,
    ) -> Result<Self> {
        if !(power > 0.0) {
            return Err(Error::domain("pilot power must be positive"));
        }
        let q = observation_covariance(r, copilots, power, noise_var, tau_p);
        let chol = cholesky(&q)?;
        // R Q^-1 = (Q^-1 R)^H since both are Hermitian
        let gain = chol.solve(r).adjoint();
        let error_cov = error_covariance(r, &chol);
        Ok(Self {
            gain,
            q,
            error_cov,
            scale: power.sqrt() * tau_p as f64,
        })
    }

    /// Filters for every member of one co-pilot group at one BS, sharing
    /// a single factorization: member `n` has `Q_n = Q / p_n` with
    /// `Q = sum_c p_c R_c + (sigma^2 / tau_p) I`.
    pub fn group(rs: &[&CMat], powers: &[f64], noise_var: f64, tau_p: usize) -> Result<Vec<Self>> {
        let Some(first) = rs.first() else {
            return Ok(Vec::new());
        };
        if powers.len() != rs.len() || powers.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::domain("every group member needs a positive pilot power"));
        }
        let m = first.nrows();
        let mut q = CMat::zeros(m, m);
        for (r, p) in rs.iter().zip(powers) {
            q += *r * Complex64::new(*p, 0.0);
        }
        let n = noise_var / tau_p as f64;
        for a in 0..m {
            q[(a, a)] += n;
        }
        let chol = cholesky(&q)?;
        Ok(rs
            .iter()
            .zip(powers)
            .map(|(r, &p)| MmseFilter {
                gain: chol.solve(*r).adjoint() * Complex64::new(p, 0.0),
                q: &q / Complex64::new(p, 0.0),
                error_cov: scaled_error_covariance(r, &chol, p),
                scale: p.sqrt() * tau_p as f64,
            })
            .collect())
    }

    /// Estimate only, without copying the covariances.
    pub fn estimate(&self, y: &CVec) -> CVec {
        &self.gain * (y / Complex64::new(self.scale, 0.0))
    }

    pub fn apply(&self, y: &CVec) -> ChannelEstimate {
        let y_hat = y / Complex64::new(self.scale, 0.0);
        ChannelEstimate {
            g_hat: &self.gain * y_hat,
            q: self.q.clone(),
            error_cov: self.error_cov.clone(),
            y: y.clone(),
        }
    }
}

/// MMSE estimate of the channel with correlation `r` from its despread
/// pilot observation `y`. `copilots` lists the other devices on the same
/// pilot with their powers.
pub fn mmse_estimate(
    r: &CMat,
    copilots: &[(&CMat, f64)],
    y: &CVec,
    power: f64,
    noise_var: f64,
    tau_p: usize,
) -> Result<ChannelEstimate> {
    Ok(MmseFilter::new(r, copilots, power, noise_var, tau_p)?.apply(y))
}

/// Normalized estimation error `(tr R - tr(R Q^-1 R)) / tr R`.
pub fn estimation_nmse(r: &CMat, q: &CMat) -> Result<f64> {
    let tr = trace_re(r);
    if !(tr > 0.0) {
        return Err(Error::domain("correlation matrix has zero trace"));
    }
    let chol = cholesky(q)?;
    let e = error_covariance(r, &chol);
    Ok((trace_re(&e) / tr).clamp(0.0, 1.0))
}

/// Row-major CSV dump of a complex matrix, real and imaginary parts
/// interleaved.
pub fn write_correlation_csv<W: Write>(out: W, r: &CMat) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for a in 0..r.nrows() {
        let row: Vec<String> = (0..r.ncols())
            .flat_map(|b| {
                let z = r[(a, b)];
                [format!("{:e}", z.re), format!("{:e}", z.im)]
            })
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cn_vector, frobenius, hermitian_defect, min_eigenvalue};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> CMat {
        let a = CMat::from_fn(n, n, |_, _| cn01(rng));
        &a * a.adjoint() / c(n as f64)
    }

    #[test]
    fn scalar_correlation_is_beta() {
        let r = local_scattering_correlation(0.3, 0.17, 1, 0.5).scaled(2.5e-9);
        assert_eq!(r.r.nrows(), 1);
        assert!((r.r[(0, 0)].re - 2.5e-9).abs() < 1e-24);
        assert!((r.beta - 2.5e-9).abs() < 1e-24);
    }

    #[test]
    fn wide_spread_decorrelates() {
        let r = local_scattering_correlation(0.4, 50.0, 6, 0.5);
        for a in 0..6 {
            for b in 0..6 {
                if a != b {
                    assert!(r.r[(a, b)].norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn correlation_is_hermitian_psd_with_trace_m_beta() {
        for &(theta, m) in &[(0.0, 8usize), (1.0, 32), (-2.5, 64), (0.7, 128)] {
            let r = local_scattering_correlation(theta, 10f64.to_radians(), m, 0.5).scaled(3e-10);
            assert!(hermitian_defect(&r.r) < 1e-12);
            assert!(min_eigenvalue(&r.r) >= -1e-10 * trace_re(&r.r));
            assert!((trace_re(&r.r) / m as f64 / 3e-10 - 1.0).abs() < 1e-9);
        }
    }

    /// Exact local scattering: `E[exp(j 2 pi s d sin(theta + delta))]`,
    /// `delta ~ N(0, asd^2)`, by composite Simpson quadrature.
    fn exact_entry(d: f64, theta: f64, asd: f64, s: f64) -> Complex64 {
        let n = 20_000;
        let lo = -20.0 * asd;
        let h = 40.0 * asd / n as f64;
        let mut acc = ZERO;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let pdf = (-0.5 * (x / asd).powi(2)).exp() / (asd * std::f64::consts::TAU.sqrt());
            acc += Complex64::from_polar(pdf * w, std::f64::consts::TAU * s * d * (theta + x).sin());
        }
        acc * (h / 3.0)
    }

    #[test]
    fn matches_quadrature_of_the_scattering_integral() {
        let theta = 30f64.to_radians();
        let asd = 10f64.to_radians();
        let r = local_scattering_correlation(theta, asd, 4, 0.5);
        for a in 0..4 {
            for b in 0..4 {
                let exact = exact_entry(a as f64 - b as f64, theta, asd, 0.5);
                let got = r.r[(a, b)];
                // the closed form is a small-angle expansion: magnitudes
                // agree entrywise, the phase drifts slightly at the largest lag
                let mag = (got.norm() - exact.norm()).abs() / exact.norm();
                assert!(mag < 0.05, "({a},{b}): {got} vs {exact}, magnitude off by {mag}");
                let abs = (got - exact).norm() / r.r[(0, 0)].re;
                assert!(abs < 0.05, "({a},{b}): {got} vs {exact}, error {abs} of the diagonal");
            }
        }
    }

    #[test]
    fn toeplitz_helpers_agree_with_dense() {
        let a = local_scattering_profile(0.4, 0.2, 9, 0.5).scaled(2.0);
        let b = local_scattering_profile(-1.1, 0.1, 9, 0.5);
        let (da, db) = (a.to_dense(), b.to_dense());
        let dense = (&da * db.adjoint()).trace().re;
        assert!((a.trace_inner(&b) - dense).abs() < 1e-10 * dense.abs().max(1.0));
        assert!((a.frobenius() - frobenius(&da)).abs() < 1e-10);
        assert!((a.trace() - trace_re(&da)).abs() < 1e-12);
    }

    /// Dense unitary DFT, as an independent route to the beam powers.
    fn dft(m: usize) -> CMat {
        CMat::from_fn(m, m, |q, a| {
            Complex64::from_polar(1.0 / (m as f64).sqrt(), -std::f64::consts::TAU * (q * a) as f64 / m as f64)
        })
    }

    #[test]
    fn beam_powers_match_dense_transform() {
        for &m in &[1usize, 2, 7, 16, 33] {
            let t = local_scattering_profile(0.9, 0.15, m, 0.5).scaled(1.7);
            let f = dft(m);
            let full = &f * t.to_dense() * f.adjoint();
            let fast = t.beam_powers();
            for q in 0..m {
                assert!((fast[q] - full[(q, q)].re).abs() < 1e-10, "m={m} q={q}");
            }
            assert!((fast.iter().sum::<f64>() - t.trace()).abs() < 1e-9);
        }
    }

    #[test]
    fn sampled_covariance_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = local_scattering_correlation(0.5, 0.17, 4, 0.5).r;
        let s = ChannelSampler::new(&r);
        let n = 100_000;
        let mut acc = CMat::zeros(4, 4);
        for _ in 0..n {
            let g = s.draw(&mut rng);
            acc += &g * g.adjoint();
        }
        acc /= c(n as f64);
        assert!(frobenius(&(acc - &r)) <= 0.02 * frobenius(&r));
    }

    #[test]
    fn dft_pilots_are_orthogonal() {
        for tau in 1..12 {
            let b = PilotBook::new(tau, vec![]).unwrap();
            for p in 0..tau {
                for q in 0..tau {
                    let ip = b.sequences[p].dotc(&b.sequences[q]);
                    let want = if p == q { tau as f64 } else { 0.0 };
                    assert!((ip - c(want)).norm() < 1e-10);
                }
            }
        }
        assert!(PilotBook::new(3, vec![vec![0, 3]]).is_err());
    }

    fn single_links(gs: Vec<Vec<CVec>>) -> Vec<Vec<Vec<CVec>>> {
        // one BS: channels[i][k][0]
        gs.into_iter()
            .map(|cell| cell.into_iter().map(|g| vec![g]).collect())
            .collect()
    }

    #[test]
    fn noiseless_single_device_despread() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = cn_vector(&mut rng, 5, 1.0);
        let book = PilotBook::new(3, vec![vec![2]]).unwrap();
        let y = despread_pilots(&single_links(vec![vec![g.clone()]]), &book, &[vec![4.0]], 0.0, &mut rng);
        let want = &g * c(2.0 * 3.0);
        assert!((&y[0][2] - want).norm() < 1e-10);
        assert!(y[0][0].norm() < 1e-10);
    }

    #[test]
    fn copilot_devices_add_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g1 = cn_vector(&mut rng, 4, 1.0);
        let g2 = cn_vector(&mut rng, 4, 1.0);
        let g3 = cn_vector(&mut rng, 4, 1.0);
        let book = PilotBook::new(2, vec![vec![0, 1], vec![0]]).unwrap();
        let chans = single_links(vec![vec![g1.clone(), g3.clone()], vec![g2.clone()]]);
        let y = despread_pilots(&chans, &book, &[vec![1.0, 1.0], vec![9.0]], 0.0, &mut rng);
        let want = (&g1 + &g2 * c(3.0)) * c(2.0);
        assert!((&y[0][0] - want).norm() < 1e-10);
        assert!((&y[0][1] - &g3 * c(2.0)).norm() < 1e-10);
    }

    #[test]
    fn despread_is_linear_in_each_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g1 = cn_vector(&mut rng, 3, 1.0);
        let g2 = cn_vector(&mut rng, 3, 1.0);
        let book = PilotBook::new(4, vec![vec![1], vec![1]]).unwrap();
        let pw = [vec![2.0], vec![3.0]];
        let scale = Complex64::new(-1.5, 0.25);
        let a = despread_pilots(&single_links(vec![vec![g1.clone()], vec![g2.clone()]]), &book, &pw, 0.0, &mut rng);
        let b = despread_pilots(&single_links(vec![vec![&g1 * scale], vec![g2.clone()]]), &book, &pw, 0.0, &mut rng);
        let contrib = &g1 * c(2f64.sqrt() * 4.0);
        assert!((&b[0][1] - &a[0][1] - contrib * (scale - c(1.0))).norm() < 1e-10);
    }

    #[test]
    fn noise_only_despread_has_tau_sigma2_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 3;
        let tau = 5;
        let sigma2 = 0.7;
        let book = PilotBook::new(tau, vec![vec![0]]).unwrap();
        let chans = single_links(vec![vec![CVec::zeros(m)]]);
        let n = 100_000;
        let mut acc = CMat::zeros(m, m);
        for _ in 0..n {
            let y = despread_pilots(&chans, &book, &[vec![0.0]], sigma2, &mut rng);
            acc += &y[0][0] * y[0][0].adjoint();
        }
        acc /= c(n as f64);
        let want = CMat::identity(m, m) * c(tau as f64 * sigma2);
        assert!(frobenius(&(acc - &want)) <= 0.02 * frobenius(&want));
    }

    #[test]
    fn noiseless_estimate_recovers_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = local_scattering_correlation(0.2, 0.3, 6, 0.5).r;
        let g = ChannelSampler::new(&r).draw(&mut rng);
        let tau = 4;
        let p: f64 = 1.0;
        let y = &g * c(p.sqrt() * tau as f64);
        let est = mmse_estimate(&r, &[], &y, p, 1e-12, tau).unwrap();
        assert!((&est.g_hat - &g).norm() <= 1e-4 * g.norm());
    }

    #[test]
    fn scalar_estimate_matches_hand_formula() {
        let beta = 2.0;
        let others = [0.5, 1.5];
        let sigma2 = 0.3;
        let tau = 3;
        let p = 2.0;
        let r = CMat::from_element(1, 1, c(beta));
        let ro: Vec<CMat> = others.iter().map(|&b| CMat::from_element(1, 1, c(b))).collect();
        let cp: Vec<(&CMat, f64)> = ro.iter().map(|m| (m, p)).collect();
        let y = CVec::from_element(1, Complex64::new(0.4, -1.2));
        let est = mmse_estimate(&r, &cp, &y, p, sigma2, tau).unwrap();
        let y_hat = y[0] / (p.sqrt() * tau as f64);
        let total = beta + others.iter().sum::<f64>();
        let want = y_hat * beta / (total + sigma2 / (tau as f64 * p));
        assert!((est.g_hat[0] - want).norm() < 1e-12);
    }

    #[test]
    fn nmse_limits() {
        let r = local_scattering_correlation(0.2, 0.3, 4, 0.5).r;
        let q0 = observation_covariance(&r, &[], 1.0, 1e-14, 1);
        assert!(estimation_nmse(&r, &q0).unwrap() < 1e-6);
        let q1 = observation_covariance(&r, &[], 1.0, 1e12, 1);
        assert!(estimation_nmse(&r, &q1).unwrap() > 1.0 - 1e-6);
        let one = CMat::from_element(1, 1, c(0.8));
        let q = observation_covariance(&one, &[(&one, 1.0)], 1.0, 0.0, 1);
        assert!((estimation_nmse(&one, &q).unwrap() - 0.5).abs() < 1e-12);
        assert!(estimation_nmse(&CMat::zeros(2, 2), &CMat::identity(2, 2)).is_err());
    }

    #[test]
    fn singular_observation_covariance_is_reported() {
        let r = CMat::from_fn(2, 2, |_, _| c(1.0));
        let err = mmse_estimate(&r, &[], &CVec::zeros(2), 1.0, 0.0, 1).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn error_covariance_is_psd_and_below_r() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let r = random_psd(&mut rng, 5);
            let i1 = random_psd(&mut rng, 5);
            let f = MmseFilter::new(&r, &[(&i1, 1.0)], 1.0, 0.1, 2).unwrap();
            assert!(hermitian_defect(&f.error_cov) < 1e-12);
            assert!(min_eigenvalue(&f.error_cov) >= -1e-10 * trace_re(&r));
            assert!(trace_re(&f.error_cov) <= trace_re(&r) + 1e-12);
        }
    }

    #[test]
    fn group_filters_match_individual_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rs: Vec<CMat> = (0..3).map(|_| random_psd(&mut rng, 4)).collect();
        let powers = [1.0, 2.5, 0.4];
        let refs: Vec<&CMat> = rs.iter().collect();
        let group = MmseFilter::group(&refs, &powers, 0.3, 3).unwrap();
        let y = cn_vector(&mut rng, 4, 1.0);
        for n in 0..3 {
            let others: Vec<(&CMat, f64)> = (0..3).filter(|&c| c != n).map(|c| (&rs[c], powers[c])).collect();
            let solo = MmseFilter::new(&rs[n], &others, powers[n], 0.3, 3).unwrap();
            let g = &group[n];
            assert!(frobenius(&(&g.q - &solo.q)) < 1e-12 * frobenius(&solo.q));
            assert!(frobenius(&(&g.gain - &solo.gain)) < 1e-10 * frobenius(&solo.gain));
            assert!(frobenius(&(&g.error_cov - &solo.error_cov)) < 1e-10 * trace_re(&rs[n]));
            let diff = g.estimate(&y) - solo.apply(&y).g_hat;
            assert!(diff.norm() < 1e-10 * y.norm());
        }
        assert!(MmseFilter::group(&[], &[], 0.3, 3).unwrap().is_empty());
        assert!(MmseFilter::group(&refs[..1], &[0.0], 0.3, 3).is_err());
    }

    #[test]
    fn correlation_csv_layout() {
        let r = CMat::from_fn(2, 2, |a, b| Complex64::new(a as f64, b as f64));
        let mut buf = Vec::new();
        write_correlation_csv(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1], "1e0,0e0,1e0,1e0");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn copilot_interference_never_lowers_nmse(seed in 0u64..10_000, sigma2 in 1e-3f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_psd(&mut rng, 4);
            let i1 = random_psd(&mut rng, 4);
            let i2 = random_psd(&mut rng, 4);
            let q1 = observation_covariance(&r, &[(&i1, 1.0)], 1.0, sigma2, 2);
            let q2 = observation_covariance(&r, &[(&i1, 1.0), (&i2, 1.0)], 1.0, sigma2, 2);
            let q0 = observation_covariance(&r, &[], 1.0, sigma2, 2);
            let n0 = estimation_nmse(&r, &q0).unwrap();
            let n1 = estimation_nmse(&r, &q1).unwrap();
            let n2 = estimation_nmse(&r, &q2).unwrap();
            prop_assert!(n0 <= n1 + 1e-12 && n1 <= n2 + 1e-12);
            prop_assert!((0.0..=1.0).contains(&n2));
        }
    }
}
