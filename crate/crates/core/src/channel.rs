//! Fading channels, distributed zero-forcing and effective scalar gains.
//!
//! Every BS precodes with the normalized pseudo-inverse of its own channel
//! rows towards the served users. After precoding, user `k` sees from BS `i`
//! a single scalar gain `a_ik = h_ik^H g_ik`; all intra-BS interference is
//! nulled exactly, so the downlink decouples into parallel MISO channels.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::complex_gaussian;

/// Realizations whose Gram matrix has a condition estimate above this are
/// rejected and redrawn by the caller.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Per-link variance `sigma_ik` of every entry of `h_ik` (row-major, B x K).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkVariances {
    bs: usize,
    users: usize,
    sigma: Vec<f64>,
}

impl LinkVariances {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let bs = rows.len();
        if bs == 0 {
            return Err(Error::InvalidInput("variance matrix has no rows".into()));
        }
        let users = rows[0].len();
        if users == 0 || rows.iter().any(|r| r.len() != users) {
            return Err(Error::InvalidInput("variance matrix rows must have equal nonzero length".into()));
        }
        let sigma: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(bad) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidInput(format!("link variance {bad} is not strictly positive and finite")));
        }
        Ok(Self { bs, users, sigma })
    }

    pub fn uniform(bs: usize, users: usize, value: f64) -> Result<Self> {
        Self::new(vec![vec![value; users]; bs])
    }

    pub fn bs(&self) -> usize {
        self.bs
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.sigma[i * self.users + k]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.sigma.chunks(self.users).map(<[f64]>::to_vec).collect()
    }
}

/// BSs and UTs on a line, with UTs displaced perpendicularly by `cross_offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology1D {
    pub bs_positions: Vec<f64>,
    pub ut_positions: Vec<f64>,
    pub cross_offset: f64,
    pub pathloss_exponent: f64,
}

impl Topology1D {
    pub fn distance(&self, i: usize, k: usize) -> f64 {
        let dx = self.bs_positions[i] - self.ut_positions[k];
        dx.hypot(self.cross_offset)
    }
}

/// Path-loss variances `sigma_ik = d_ik^(-exponent)`.
pub fn variances_from_topology(topo: &Topology1D) -> Result<LinkVariances> {
    if topo.bs_positions.is_empty() || topo.ut_positions.is_empty() {
        return Err(Error::InvalidTopology("topology needs at least one BS and one UT".into()));
    }
    if !(topo.pathloss_exponent.is_finite() && topo.pathloss_exponent > 0.0) {
        return Err(Error::InvalidTopology(format!(
            "path-loss exponent {} must be positive",
            topo.pathloss_exponent
        )));
    }
    let mut rows = Vec::with_capacity(topo.bs_positions.len());
    for i in 0..topo.bs_positions.len() {
        let mut row = Vec::with_capacity(topo.ut_positions.len());
        for k in 0..topo.ut_positions.len() {
            let d = topo.distance(i, k);
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidTopology(format!("BS {} and UT {} are at zero distance", i + 1, k + 1)));
            }
            row.push(d.powf(-topo.pathloss_exponent));
        }
        rows.push(row);
    }
    LinkVariances::new(rows).map_err(|e| Error::InvalidTopology(e.to_string()))
}

/// Channel vectors `h_ik` for every BS/UT pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    bs: usize,
    users: usize,
    antennas: usize,
    h: Vec<Vec<Complex64>>,
}

impl ChannelRealization {
    pub fn from_vectors(bs: usize, users: usize, h: Vec<Vec<Complex64>>) -> Result<Self> {
        if h.len() != bs * users {
            return Err(Error::InvalidInput(format!("expected {} channel vectors, got {}", bs * users, h.len())));
        }
        let antennas = h.first().map_or(0, Vec::len);
        if antennas == 0 || h.iter().any(|v| v.len() != antennas) {
            return Err(Error::InvalidInput("channel vectors must share a nonzero length".into()));
        }
        Ok(Self { bs, users, antennas, h })
    }

    pub fn bs(&self) -> usize {
        self.bs
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// Channel from BS `i` to UT `k`.
    pub fn link(&self, i: usize, k: usize) -> &[Complex64] {
        &self.h[i * self.users + k]
    }
}

/// Draw `h_ik ~ CN(0, sigma_ik I_M)` independently for all pairs.
///
/// Entries are drawn BS-major, then user, then antenna, so the stream layout
/// is fixed for a given `(B, K, M)`.
pub fn sample_channel<R: Rng + ?Sized>(sigma: &LinkVariances, m: usize, rng: &mut R) -> ChannelRealization {
    assert!(m >= 1, "antenna count must be at least one");
    let mut h = Vec::with_capacity(sigma.bs * sigma.users);
    for i in 0..sigma.bs {
        for k in 0..sigma.users {
            let var = sigma.get(i, k);
            h.push((0..m).map(|_| complex_gaussian(rng, var)).collect());
        }
    }
    ChannelRealization {
        bs: sigma.bs,
        users: sigma.users,
        antennas: m,
        h,
    }
}

/// Output of [`zf_beamformer`].
#[derive(Debug, Clone)]
pub struct ZfBeams {
    /// `a_k = h_k^H g_k`, real and nonnegative.
    pub gains: Vec<f64>,
    /// Unit-norm precoding vectors `g_k`.
    pub beams: Vec<Vec<Complex64>>,
    /// Frobenius condition estimate `||G||_F ||G^-1||_F` of the Gram matrix.
    pub condition: f64,
}

/// Normalized pseudo-inverse precoder for the channel vectors `rows`
/// (row `k` of `H` is `rows[k]^H`).
///
/// With `X = (H H^H)^-1`, column `k` of `H^+` is `u_k = sum_j h_j X_jk` and
/// `||u_k||^2 = X_kk`, so `a_k = 1 / sqrt(X_kk)`. The phase of `a_k` is zero
/// by construction because `h_k^H u_k = 1`.
///
/// The Frobenius estimate upper-bounds the 2-norm condition number by at
/// most a factor `K`.
pub fn zf_beamformer(rows: &[&[Complex64]]) -> Result<ZfBeams> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidInput("zero-forcing needs at least one user".into()));
    }
    let m = rows[0].len();
    if n > m {
        return Err(Error::InvalidInput(format!("cannot zero-force {n} users with {m} antennas")));
    }
    let owned: Vec<Vec<Complex64>> = rows.iter().map(|r| r.to_vec()).collect();
    let g = linalg::gram(&owned);
    let l = linalg::cholesky(&g, n).ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
    let inv = linalg::cholesky_inverse(&l, n);
    let condition = linalg::frobenius(&g) * linalg::frobenius(&inv);
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }

    let mut gains = Vec::with_capacity(n);
    let mut beams = Vec::with_capacity(n);
    for k in 0..n {
        let xkk = inv[k * n + k].re;
        let a = 1.0 / xkk.sqrt();
        let mut u = vec![Complex64::new(0.0, 0.0); m];
        for (j, h) in rows.iter().enumerate() {
            let coef = inv[j * n + k];
            for (dst, hm) in u.iter_mut().zip(h.iter()) {
                *dst += hm * coef;
            }
        }
        for z in &mut u {
            *z *= a;
        }
        gains.push(a);
        beams.push(u);
    }
    Ok(ZfBeams { gains, beams, condition })
}

/// Post-ZF scalar gains `a_ik` (row-major, B x K̃) of the served users.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    bs: usize,
    served: Vec<usize>,
    a: Vec<f64>,
}

impl EffectiveChannel {
    /// Build from per-BS rows of amplitudes `|a_ik|`.
    pub fn from_amplitudes(rows: Vec<Vec<f64>>, served: Vec<usize>) -> Result<Self> {
        let bs = rows.len();
        if bs == 0 || rows.iter().any(|r| r.len() != served.len()) || served.is_empty() {
            return Err(Error::InvalidInput("effective channel rows must match the served set".into()));
        }
        let a: Vec<f64> = rows.into_iter().flatten().collect();
        if a.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidInput("effective gains must be finite and nonnegative".into()));
        }
        Ok(Self { bs, served, a })
    }

    /// Build from power gains `|a_ik|^2`.
    pub fn from_power_gains(rows: Vec<Vec<f64>>, served: Vec<usize>) -> Result<Self> {
        let rows = rows.into_iter().map(|r| r.into_iter().map(f64::sqrt).collect()).collect();
        Self::from_amplitudes(rows, served)
    }

    pub fn bs(&self) -> usize {
        self.bs
    }

    pub fn served(&self) -> &[usize] {
        &self.served
    }

    pub fn num_served(&self) -> usize {
        self.served.len()
    }

    pub fn amplitude(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.served.len() + j]
    }

    pub fn power_gain(&self, i: usize, j: usize) -> f64 {
        let a = self.amplitude(i, j);
        a * a
    }

    /// `|a_ik|^2` over all BSs for served slot `j`.
    pub fn power_column(&self, j: usize) -> Vec<f64> {
        (0..self.bs).map(|i| self.power_gain(i, j)).collect()
    }

    /// `|a_ik|^2` over all served slots at BS `i`.
    pub fn power_row(&self, i: usize) -> Vec<f64> {
        (0..self.served.len()).map(|j| self.power_gain(i, j)).collect()
    }
}

/// `1 / sqrt(M - K̃ + 1)`: scales the raw ZF gain, whose square has mean
/// `(M - K̃ + 1) sigma_ik`, to the unit-mean normalization `E|a_ik|^2 = sigma_ik`.
pub fn gain_normalization(antennas: usize, served: usize) -> f64 {
    1.0 / ((antennas - served + 1) as f64).sqrt()
}

/// Apply distributed ZF at every BS towards the users in `served`.
/// Gains are normalized so that `|a_ik|^2 ~ Gamma(M - K̃ + 1, sigma_ik / (M - K̃ + 1))`.
pub fn effective_channel(real: &ChannelRealization, served: &[usize]) -> Result<EffectiveChannel> {
    check_served(real, served)?;
    let scale = gain_normalization(real.antennas, served.len());
    let mut a = Vec::with_capacity(real.bs * served.len());
    for i in 0..real.bs {
        let rows: Vec<&[Complex64]> = served.iter().map(|&k| real.link(i, k)).collect();
        a.extend(zf_beamformer(&rows)?.gains.into_iter().map(|g| g * scale));
    }
    Ok(EffectiveChannel {
        bs: real.bs,
        served: served.to_vec(),
        a,
    })
}

/// Baseline without message sharing: BS `i` only serves UT `pairing[i]`,
/// with a unit-norm beam orthogonal to the other paired users' channels.
/// Returns `a_k` for each paired user in pairing order.
///
/// The ZF column for user `i` is exactly the normalized projection of
/// `h_ii` onto the orthogonal complement of the other rows, so the gain
/// equals the diagonal entry of the cooperative effective channel (with the
/// same normalization).
pub fn noncooperative_effective(real: &ChannelRealization, pairing: &[usize]) -> Result<Vec<f64>> {
    if pairing.len() != real.bs {
        return Err(Error::InvalidInput(format!(
            "non-cooperative ZF pairs one UT per BS: {} BSs but {} users",
            real.bs,
            pairing.len()
        )));
    }
    check_served(real, pairing)?;
    let scale = gain_normalization(real.antennas, pairing.len());
    let mut gains = Vec::with_capacity(pairing.len());
    for i in 0..real.bs {
        let rows: Vec<&[Complex64]> = pairing.iter().map(|&k| real.link(i, k)).collect();
        gains.push(zf_beamformer(&rows)?.gains[i] * scale);
    }
    Ok(gains)
}

fn check_served(real: &ChannelRealization, served: &[usize]) -> Result<()> {
    if served.len() > real.antennas {
        return Err(Error::InvalidInput(format!(
            "{} served users exceed {} antennas",
            served.len(),
            real.antennas
        )));
    }
    if let Some(&k) = served.iter().find(|&&k| k >= real.users) {
        return Err(Error::InvalidInput(format!("user index {k} out of range")));
    }
    let mut sorted = served.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("served set contains duplicates".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inner;
    use crate::rng::substream;
    use crate::stats::{ks_statistic, mean};
    use statrs::distribution::{ContinuousCDF, Gamma};

    fn topo(ut: Vec<f64>) -> Topology1D {
        Topology1D {
            bs_positions: vec![1.0, 3.0],
            ut_positions: ut,
            cross_offset: 1.0,
            pathloss_exponent: 3.0,
        }
    }

    #[test]
    fn topology_variances() {
        let v = variances_from_topology(&topo(vec![2.0, 3.0])).unwrap();
        // BS1-UT2 at d = sqrt(5), BS2-UT2 at d = 1, BS2-UT1 at d = sqrt(2)
        assert!((v.get(0, 1) - 5f64.powf(-1.5)).abs() < 1e-15);
        assert!((v.get(1, 1) - 1.0).abs() < 1e-15);
        assert!((v.get(1, 0) - 2f64.powf(-1.5)).abs() < 1e-15);
        let unit = variances_from_topology(&Topology1D {
            bs_positions: vec![1.0],
            ut_positions: vec![1.0],
            cross_offset: 1.0,
            pathloss_exponent: 3.0,
        })
        .unwrap();
        assert_eq!(unit.get(0, 0), 1.0);
    }

    #[test]
    fn zero_distance_is_rejected() {
        let t = Topology1D {
            bs_positions: vec![1.0],
            ut_positions: vec![1.0],
            cross_offset: 0.0,
            pathloss_exponent: 3.0,
        };
        assert!(matches!(variances_from_topology(&t), Err(Error::InvalidTopology(_))));
    }

    #[test]
    fn nonpositive_variance_is_rejected() {
        assert!(LinkVariances::new(vec![vec![1.0, 0.0]]).is_err());
        assert!(LinkVariances::new(vec![vec![1.0, f64::NAN]]).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let sigma = LinkVariances::uniform(2, 3, 1.0).unwrap();
        let a = sample_channel(&sigma, 4, &mut substream(11, 0));
        let b = sample_channel(&sigma, 4, &mut substream(11, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn sample_moments() {
        let n = 100_000;
        let sigma = LinkVariances::uniform(1, 1, 1.0).unwrap();
        let mut rng = substream(1, 0);
        let norms: Vec<f64> = (0..n)
            .map(|_| linalg::norm_sqr(sample_channel(&sigma, 4, &mut rng).link(0, 0)))
            .collect();
        // ||h||^2 ~ Gamma(4, 1): variance 4
        let se = (4.0 / n as f64).sqrt();
        assert!((mean(&norms) - 4.0).abs() < 3.0 * se);

        let sigma = LinkVariances::uniform(1, 1, 0.25).unwrap();
        let re: Vec<f64> = (0..n).map(|_| sample_channel(&sigma, 1, &mut rng).link(0, 0)[0].re).collect();
        let var = re.iter().map(|x| x * x).sum::<f64>() / n as f64;
        // sample variance of N(0, 0.125) has std 0.125 * sqrt(2/n)
        assert!((var - 0.125).abs() < 3.0 * 0.125 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn single_user_is_matched_filter() {
        let h = vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.3), Complex64::new(0.0, -1.0)];
        let zf = zf_beamformer(&[&h]).unwrap();
        let norm = linalg::norm_sqr(&h).sqrt();
        assert!((zf.gains[0] - norm).abs() < 1e-12);
        for (g, x) in zf.beams[0].iter().zip(&h) {
            assert!((g - x / norm).norm() < 1e-12);
        }
    }

    #[test]
    fn orthonormal_rows_give_unit_gains() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h1 = vec![Complex64::new(s, 0.0), Complex64::new(0.0, s), Complex64::new(0.0, 0.0)];
        let h2 = vec![Complex64::new(0.0, s), Complex64::new(s, 0.0), Complex64::new(0.0, 0.0)];
        let zf = zf_beamformer(&[&h1, &h2]).unwrap();
        for (k, h) in [&h1, &h2].iter().enumerate() {
            assert!((zf.gains[k] - 1.0).abs() < 1e-12);
            for (g, x) in zf.beams[k].iter().zip(h.iter()) {
                assert!((g - x).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zf_nulls_interference() {
        let sigma = LinkVariances::uniform(1, 2, 1.0).unwrap();
        let mut rng = substream(5, 0);
        for _ in 0..200 {
            let real = sample_channel(&sigma, 4, &mut rng);
            let rows = [real.link(0, 0), real.link(0, 1)];
            let zf = zf_beamformer(&rows).unwrap();
            for (k, g) in zf.beams.iter().enumerate() {
                assert!((linalg::norm_sqr(g) - 1.0).abs() < 1e-12);
                for (j, h) in rows.iter().enumerate() {
                    let v = inner(h, g);
                    if j == k {
                        assert!((v - Complex64::new(zf.gains[k], 0.0)).norm() < 1e-10);
                    } else {
                        assert!(v.norm() < 1e-10);
                        assert!(v.norm() / zf.gains[k] < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn rank_deficient_rows_are_rejected() {
        let h = vec![Complex64::new(1.0, 0.0), Complex64::new(2.0, 1.0)];
        let h2: Vec<Complex64> = h.iter().map(|z| z * Complex64::new(0.0, 3.0)).collect();
        assert!(matches!(zf_beamformer(&[&h, &h2]), Err(Error::IllConditioned { .. })));
        assert!(zf_beamformer(&[&h, &h2, &h]).is_err());
    }

    #[test]
    fn single_link_effective_channel() {
        let sigma = LinkVariances::uniform(1, 1, 1.0).unwrap();
        let real = sample_channel(&sigma, 1, &mut substream(2, 0));
        let eff = effective_channel(&real, &[0]).unwrap();
        assert!((eff.amplitude(0, 0) - linalg::norm_sqr(real.link(0, 0)).sqrt()).abs() < 1e-12);
        let real = sample_channel(&sigma, 3, &mut substream(2, 0));
        let eff = effective_channel(&real, &[0]).unwrap();
        let expected = (linalg::norm_sqr(real.link(0, 0)) / 3.0).sqrt();
        assert!((eff.amplitude(0, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn effective_gain_follows_gamma_law() {
        let n = 20_000;
        let sigma = LinkVariances::uniform(2, 2, 1.0).unwrap();
        let mut rng = substream(3, 0);
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let real = sample_channel(&sigma, 4, &mut rng);
            samples.push(effective_channel(&real, &[0, 1]).unwrap().power_gain(1, 0));
        }
        let law = Gamma::new(3.0, 3.0).unwrap();
        let d = ks_statistic(&mut samples, |x| law.cdf(x));
        assert!(d < 1.63 / (n as f64).sqrt(), "KS distance {d}");
    }

    #[test]
    fn noncooperative_matches_cooperative_diagonal() {
        let sigma = LinkVariances::uniform(2, 2, 1.0).unwrap();
        let mut rng = substream(9, 0);
        for _ in 0..50 {
            let real = sample_channel(&sigma, 3, &mut rng);
            let coop = effective_channel(&real, &[0, 1]).unwrap();
            let non = noncooperative_effective(&real, &[0, 1]).unwrap();
            assert!((non[0] - coop.amplitude(0, 0)).abs() < 1e-12);
            assert!((non[1] - coop.amplitude(1, 1)).abs() < 1e-12);
        }
        let one = LinkVariances::uniform(1, 1, 1.0).unwrap();
        let real = sample_channel(&one, 1, &mut rng);
        let non = noncooperative_effective(&real, &[0]).unwrap();
        assert!((non[0] - linalg::norm_sqr(real.link(0, 0)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn noncooperative_mean_gain() {
        let n = 100_000;
        let sigma = LinkVariances::uniform(2, 2, 1.0).unwrap();
        let mut rng = substream(4, 0);
        let gains: Vec<f64> = (0..n)
            .map(|_| {
                let real = sample_channel(&sigma, 2, &mut rng);
                noncooperative_effective(&real, &[0, 1]).unwrap()[0].powi(2)
            })
            .collect();
        // Exp(1): std 1
        assert!((mean(&gains) - 1.0).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn too_many_users_rejected() {
        let sigma = LinkVariances::uniform(1, 3, 1.0).unwrap();
        let real = sample_channel(&sigma, 2, &mut substream(1, 1));
        assert!(effective_channel(&real, &[0, 1, 2]).is_err());
        assert!(effective_channel(&real, &[0, 0]).is_err());
    }
}
