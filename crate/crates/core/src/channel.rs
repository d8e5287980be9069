//! Geometric mmWave channel generation: array steering vectors, path gains,
//! first-order autoregressive block fading, and the static BS-side /
//! time-varying UE-side channel matrices assembled from them.
//!
//! The receive array at the BS and the transmit array at the UE are uniform
//! linear arrays; the reflecting panel is a uniform rectangular array whose
//! 2D steering vector factors as a Kronecker product of two linear steering
//! vectors. Element indexing starts at zero, so the first entry of every
//! steering vector is exactly 1.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::{diag, khatri_rao, kron_vec, CMat, CVec, Tensor3};

/// Draw one circularly-symmetric complex Gaussian sample with zero mean and
/// the given total variance (real/imag parts each carry half of it).
pub fn complex_gaussian(rng: &mut impl Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Linear-array steering vector: entry `m = exp(-j m mu)` for `m = 0..n_elems`.
pub fn ula_steering(mu: f64, n_elems: usize) -> CVec {
    CVec::from_fn(n_elems, |m, _| Complex64::from_polar(1.0, -(m as f64) * mu))
}

/// Rectangular-array steering vector of length `n1*n2`, the Kronecker product
/// of two linear steering vectors: entry `m*n2 + n = exp(-j(m mu + n psi))`.
pub fn ura_steering(mu: f64, psi: f64, n1: usize, n2: usize) -> CVec {
    kron_vec(&ula_steering(mu, n1), &ula_steering(psi, n2))
}

/// Most-square factor pair `(n1, n2)` with `n1 <= n2` and `n1 * n2 == n`,
/// used as the default panel shape for an `n`-element rectangular array.
pub fn ura_factor_pair(n: usize) -> Result<(usize, usize)> {
    if n == 0 {
        return Err(Error::NonFactorableArray { n });
    }
    let mut best = (1, n);
    let mut d = 1;
    while d * d <= n {
        if n % d == 0 {
            best = (d, n / d);
        }
        d += 1;
    }
    Ok(best)
}

/// Angular geometry of one channel draw, expressed as spatial frequencies
/// (all in `[-pi, pi]`).
#[derive(Clone, Debug)]
pub struct GeometryParams {
    /// BS arrival spatial frequencies, one per BS-side path.
    pub mu_bs: Vec<f64>,
    /// UE departure spatial frequencies, one per UE-side path.
    pub mu_ue: Vec<f64>,
    /// Panel departure frequency pairs, one per BS-side path.
    pub mu_irs_dep: Vec<f64>,
    pub psi_irs_dep: Vec<f64>,
    /// Panel arrival frequency pairs, one per UE-side path.
    pub mu_irs_arr: Vec<f64>,
    pub psi_irs_arr: Vec<f64>,
}

impl GeometryParams {
    pub fn new(
        mu_bs: Vec<f64>,
        mu_ue: Vec<f64>,
        mu_irs_dep: Vec<f64>,
        psi_irs_dep: Vec<f64>,
        mu_irs_arr: Vec<f64>,
        psi_irs_arr: Vec<f64>,
    ) -> Result<Self> {
        let l1 = mu_bs.len();
        let l2 = mu_ue.len();
        if mu_irs_dep.len() != l1 || psi_irs_dep.len() != l1 {
            return Err(Error::DimMismatch(
                "departure frequency arrays must match the BS-side path count".into(),
            ));
        }
        if mu_irs_arr.len() != l2 || psi_irs_arr.len() != l2 {
            return Err(Error::DimMismatch(
                "arrival frequency arrays must match the UE-side path count".into(),
            ));
        }
        let all = mu_bs
            .iter()
            .chain(&mu_ue)
            .chain(&mu_irs_dep)
            .chain(&psi_irs_dep)
            .chain(&mu_irs_arr)
            .chain(&psi_irs_arr);
        for &f in all {
            if !(-PI..=PI).contains(&f) {
                return Err(Error::DimMismatch(format!(
                    "spatial frequency {f} outside [-pi, pi]"
                )));
            }
        }
        Ok(Self {
            mu_bs,
            mu_ue,
            mu_irs_dep,
            psi_irs_dep,
            mu_irs_arr,
            psi_irs_arr,
        })
    }

    pub fn l1(&self) -> usize {
        self.mu_bs.len()
    }

    pub fn l2(&self) -> usize {
        self.mu_ue.len()
    }
}

/// Draw a random geometry: BS/UE angles uniform on `[-pi, pi]`, panel
/// azimuth/elevation angles uniform on `[-pi/2, pi/2]`, mapped to spatial
/// frequencies as `mu = pi cos(phi)` for the linear arrays and
/// `(mu, psi) = (pi cos(phi) sin(theta), pi cos(phi))` for the panel.
pub fn draw_geometry(rng: &mut impl Rng, l1: usize, l2: usize) -> GeometryParams {
    fn uni(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * rng.gen::<f64>()
    }

    let mu_bs: Vec<f64> = (0..l1).map(|_| PI * uni(rng, -PI, PI).cos()).collect();
    let mu_ue: Vec<f64> = (0..l2).map(|_| PI * uni(rng, -PI, PI).cos()).collect();

    let mut mu_irs_dep = Vec::with_capacity(l1);
    let mut psi_irs_dep = Vec::with_capacity(l1);
    for _ in 0..l1 {
        let phi = uni(rng, -PI / 2.0, PI / 2.0);
        let theta = uni(rng, -PI / 2.0, PI / 2.0);
        mu_irs_dep.push(PI * phi.cos() * theta.sin());
        psi_irs_dep.push(PI * phi.cos());
    }
    let mut mu_irs_arr = Vec::with_capacity(l2);
    let mut psi_irs_arr = Vec::with_capacity(l2);
    for _ in 0..l2 {
        let phi = uni(rng, -PI / 2.0, PI / 2.0);
        let theta = uni(rng, -PI / 2.0, PI / 2.0);
        mu_irs_arr.push(PI * phi.cos() * theta.sin());
        psi_irs_arr.push(PI * phi.cos());
    }

    GeometryParams {
        mu_bs,
        mu_ue,
        mu_irs_dep,
        psi_irs_dep,
        mu_irs_arr,
        psi_irs_arr,
    }
}

/// Draw `l` i.i.d. unit-variance circularly-symmetric complex Gaussian gains.
pub fn draw_gains(rng: &mut impl Rng, l: usize) -> Result<CVec> {
    if l == 0 {
        return Err(Error::DimMismatch("gain vector must be non-empty".into()));
    }
    Ok(CVec::from_fn(l, |_, _| complex_gaussian(rng, 1.0)))
}

/// First-order autoregressive fading parameters.
#[derive(Clone, Copy, Debug)]
pub struct ArFadingConfig {
    /// Correlation coefficient between consecutive blocks, in `[0, 1]`.
    pub lambda: f64,
    /// Number of fading blocks to generate.
    pub blocks: usize,
}

impl ArFadingConfig {
    pub fn new(lambda: f64, blocks: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!(
                "AR correlation coefficient {lambda} outside [0, 1]"
            )));
        }
        Ok(Self { lambda, blocks })
    }
}

/// One autoregressive step: `beta_k = lambda beta_{k-1} + xi_k` with
/// `xi_k ~ CN(0, (1 - lambda^2) I)`. Preserves unit per-entry variance.
pub fn ar_step(beta_prev: &CVec, cfg: &ArFadingConfig, rng: &mut impl Rng) -> CVec {
    let noise_var = 1.0 - cfg.lambda * cfg.lambda;
    CVec::from_fn(beta_prev.len(), |i, _| {
        cfg.lambda * beta_prev[i] + complex_gaussian(rng, noise_var)
    })
}

/// Generate the whole per-block gain sequence: the first block is drawn fresh
/// with unit variance, later blocks follow the AR recursion.
pub fn ar_evolve(l: usize, cfg: &ArFadingConfig, rng: &mut impl Rng) -> Result<Vec<CVec>> {
    let mut seq = Vec::with_capacity(cfg.blocks);
    if cfg.blocks == 0 {
        return Ok(seq);
    }
    seq.push(draw_gains(rng, l)?);
    for _ in 1..cfg.blocks {
        let next = ar_step(seq.last().unwrap(), cfg, rng);
        seq.push(next);
    }
    Ok(seq)
}

/// One full channel draw: steering matrices, gains, the static BS-side
/// matrix `g`, and the per-block UE-side sequence `h[k]`.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    /// BS receive steering matrix, `m x l1`.
    pub a_rx: CMat,
    /// UE transmit steering matrix, `q x l2`.
    pub a_tx: CMat,
    /// Panel arrival steering matrix, `n x l2`.
    pub b_rx: CMat,
    /// Panel departure steering matrix, `n x l1`.
    pub b_tx: CMat,
    /// BS-side path gains, length `l1`.
    pub alpha: CVec,
    /// UE-side path gains per block, each of length `l2`.
    pub beta: Vec<CVec>,
    /// Static BS-side channel, `m x n`.
    pub g: CMat,
    /// Per-block UE-side channels, each `n x q`.
    pub h: Vec<CMat>,
}

impl ChannelRealization {
    pub fn blocks(&self) -> usize {
        self.h.len()
    }

    /// Combined channel of block `k`: the column-wise Kronecker product
    /// `h[k]ᵀ ⋄ g`, of size `(m q) x n`.
    pub fn combined_block(&self, k: usize) -> Result<CMat> {
        if k >= self.h.len() {
            return Err(Error::IndexOutOfRange {
                index: k,
                limit: self.h.len(),
            });
        }
        khatri_rao(&self.h[k].transpose(), &self.g)
    }

    /// All combined-channel blocks stacked as frontal slices of an
    /// `(m q) x n x blocks` tensor.
    pub fn combined_tensor(&self) -> Result<Tensor3> {
        let blocks: Vec<CMat> = (0..self.blocks())
            .map(|k| self.combined_block(k))
            .collect::<Result<_>>()?;
        crate::estimation::stack_blocks(&blocks)
    }
}

/// Assemble steering matrices and channel matrices from a geometry draw and
/// gain sequences. The panel shape defaults to the most-square factorization
/// of `n`.
pub fn build_channels(
    geom: &GeometryParams,
    alpha: &CVec,
    beta: &[CVec],
    m: usize,
    q: usize,
    n: usize,
) -> Result<ChannelRealization> {
    let (l1, l2) = (geom.l1(), geom.l2());
    if alpha.len() != l1 {
        return Err(Error::DimMismatch(format!(
            "alpha has {} entries, geometry has {} BS-side paths",
            alpha.len(),
            l1
        )));
    }
    if beta.is_empty() || beta.iter().any(|b| b.len() != l2) {
        return Err(Error::DimMismatch(format!(
            "beta blocks must be non-empty with {l2} entries each"
        )));
    }
    if m == 0 || q == 0 {
        return Err(Error::DimMismatch("antenna counts must be positive".into()));
    }
    let (n1, n2) = ura_factor_pair(n)?;

    let a_rx = CMat::from_columns(
        &geom
            .mu_bs
            .iter()
            .map(|&mu| ula_steering(mu, m))
            .collect::<Vec<_>>(),
    );
    let a_tx = CMat::from_columns(
        &geom
            .mu_ue
            .iter()
            .map(|&mu| ula_steering(mu, q))
            .collect::<Vec<_>>(),
    );
    let b_tx = CMat::from_columns(
        &(0..l1)
            .map(|l| ura_steering(geom.mu_irs_dep[l], geom.psi_irs_dep[l], n1, n2))
            .collect::<Vec<_>>(),
    );
    let b_rx = CMat::from_columns(
        &(0..l2)
            .map(|l| ura_steering(geom.mu_irs_arr[l], geom.psi_irs_arr[l], n1, n2))
            .collect::<Vec<_>>(),
    );

    let g = &a_rx * diag(alpha) * b_tx.adjoint();
    let h: Vec<CMat> = beta
        .iter()
        .map(|bk| &b_rx * diag(bk) * a_tx.adjoint())
        .collect();

    Ok(ChannelRealization {
        a_rx,
        a_tx,
        b_rx,
        b_tx,
        alpha: alpha.clone(),
        beta: beta.to_vec(),
        g,
        h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ula_broadside_endfire_quarter() {
        let v = ula_steering(0.0, 4);
        assert!(v.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));

        let v = ula_steering(PI, 2);
        assert!((v[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((v[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);

        // quarter-turn progression: 1, -j, -1, j
        let v = ula_steering(PI / 2.0, 4);
        let want = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 1.0),
        ];
        for (got, want) in v.iter().zip(want) {
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn ura_factor_structure() {
        let v = ura_steering(0.0, 0.0, 2, 2);
        assert!(v.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));

        let v = ura_steering(PI, 0.0, 2, 2);
        let want = [1.0, 1.0, -1.0, -1.0];
        for (got, w) in v.iter().zip(want) {
            assert!((got - Complex64::new(w, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn ura_matches_phase_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (mu, psi) = (rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0);
        let (n1, n2) = (3, 4);
        let v = ura_steering(mu, psi, n1, n2);
        for m in 0..n1 {
            for n in 0..n2 {
                let want = Complex64::from_polar(1.0, -(m as f64 * mu + n as f64 * psi));
                assert!((v[m * n2 + n] - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn steering_entries_unit_modulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..32 {
            let mu = (rng.gen::<f64>() - 0.5) * 2.0 * PI;
            let psi = (rng.gen::<f64>() - 0.5) * 2.0 * PI;
            for z in ura_steering(mu, psi, 4, 4).iter() {
                assert!((z.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ura_pair_is_most_square() {
        assert_eq!(ura_factor_pair(16).unwrap(), (4, 4));
        assert_eq!(ura_factor_pair(32).unwrap(), (4, 8));
        assert_eq!(ura_factor_pair(7).unwrap(), (1, 7));
        assert!(matches!(
            ura_factor_pair(0),
            Err(Error::NonFactorableArray { n: 0 })
        ));
    }

    #[test]
    fn geometry_frequency_map_and_range() {
        // phi = pi/2 maps to mu = 0
        assert!((PI * (PI / 2.0).cos()).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let g = draw_geometry(&mut rng, 2, 3);
            assert_eq!(g.l1(), 2);
            assert_eq!(g.l2(), 3);
            for &f in g
                .mu_bs
                .iter()
                .chain(&g.mu_ue)
                .chain(&g.mu_irs_dep)
                .chain(&g.psi_irs_dep)
                .chain(&g.mu_irs_arr)
                .chain(&g.psi_irs_arr)
            {
                assert!((-PI..=PI).contains(&f));
            }
        }
    }

    // Empirical distribution of mu_bs matches an independently sampled
    // pi*cos(U[-pi, pi]) stream, compared on decile counts.
    #[test]
    fn geometry_mu_distribution() {
        let trials = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut got = Vec::with_capacity(trials);
        for _ in 0..trials {
            got.push(draw_geometry(&mut rng, 1, 1).mu_bs[0]);
        }
        let mut oracle_rng = ChaCha8Rng::seed_from_u64(25);
        let mut oracle = Vec::with_capacity(trials);
        for _ in 0..trials {
            let phi = -PI + 2.0 * PI * oracle_rng.gen::<f64>();
            oracle.push(PI * phi.cos());
        }
        let edges: Vec<f64> = (0..=10).map(|i| -PI + i as f64 * PI / 5.0).collect();
        let hist = |xs: &[f64]| {
            let mut h = [0usize; 10];
            for &x in xs {
                let mut b = ((x - edges[0]) / (PI / 5.0)).floor() as usize;
                if b >= 10 {
                    b = 9;
                }
                h[b] += 1;
            }
            h
        };
        let (hg, ho) = (hist(&got), hist(&oracle));
        for (a, b) in hg.iter().zip(ho) {
            let diff = (*a as f64 - b as f64).abs() / trials as f64;
            assert!(diff < 0.01, "decile mass differs by {diff}");
        }
    }

    #[test]
    fn gains_law_of_large_numbers() {
        let trials = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let mut sum = Complex64::new(0.0, 0.0);
        let mut pow = 0.0;
        for _ in 0..trials {
            let g = draw_gains(&mut rng, 1).unwrap()[0];
            sum += g;
            pow += g.norm_sqr();
        }
        assert!((sum / trials as f64).norm() < 0.02);
        assert!((pow / trials as f64 - 1.0).abs() < 0.02);
        assert!(draw_gains(&mut rng, 0).is_err());
    }

    #[test]
    fn ar_step_degenerate_lambdas() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let beta = draw_gains(&mut rng, 4).unwrap();

        let frozen = ArFadingConfig::new(1.0, 2).unwrap();
        let next = ar_step(&beta, &frozen, &mut rng);
        assert_eq!(next, beta);

        // lambda = 0: next block independent of the previous one
        let white = ArFadingConfig::new(0.0, 2).unwrap();
        let trials = 100_000;
        let mut cross = Complex64::new(0.0, 0.0);
        for _ in 0..trials {
            let b0 = draw_gains(&mut rng, 1).unwrap();
            let b1 = ar_step(&b0, &white, &mut rng);
            cross += b1[0] * b0[0].conj();
        }
        assert!((cross / trials as f64).norm() < 0.02);
    }

    #[test]
    fn ar_lag_one_correlation() {
        let cfg = ArFadingConfig::new(0.75, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let trials = 100_000;
        let mut cross = Complex64::new(0.0, 0.0);
        let mut pow = 0.0;
        for _ in 0..trials {
            let b0 = draw_gains(&mut rng, 1).unwrap();
            let b1 = ar_step(&b0, &cfg, &mut rng);
            cross += b1[0] * b0[0].conj();
            pow += b0[0].norm_sqr();
        }
        let corr = (cross / trials as f64).re / (pow / trials as f64);
        assert!((corr - 0.75).abs() < 0.02, "lag-1 correlation {corr}");
    }

    #[test]
    fn ar_stationary_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for &lambda in &[0.0, 0.4, 0.75, 1.0] {
            let cfg = ArFadingConfig::new(lambda, 5).unwrap();
            let trials = 20_000;
            let mut pow = vec![0.0; cfg.blocks];
            for _ in 0..trials {
                let seq = ar_evolve(2, &cfg, &mut rng).unwrap();
                for (k, b) in seq.iter().enumerate() {
                    pow[k] += b.norm_squared() / 2.0;
                }
            }
            for (k, p) in pow.iter().enumerate() {
                let mean = p / trials as f64;
                assert!(
                    (0.95..=1.05).contains(&mean),
                    "lambda {lambda}, block {k}: per-entry power {mean}"
                );
            }
        }
    }

    #[test]
    fn build_channels_all_ones_case() {
        let geom = GeometryParams::new(vec![0.0], vec![0.0], vec![0.0], vec![0.0], vec![0.0], vec![0.0]).unwrap();
        let one = CVec::from_element(1, Complex64::new(1.0, 0.0));
        let chan = build_channels(&geom, &one, &[one.clone()], 4, 3, 16).unwrap();
        assert_eq!((chan.g.nrows(), chan.g.ncols()), (4, 16));
        assert!(chan.g.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-12));
        assert!(chan.h[0].iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn channel_ranks_bounded_by_path_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let (l1, l2) = (2, 2);
        let geom = draw_geometry(&mut rng, l1, l2);
        let alpha = draw_gains(&mut rng, l1).unwrap();
        let beta = ar_evolve(l2, &ArFadingConfig::new(0.75, 3).unwrap(), &mut rng).unwrap();
        let chan = build_channels(&geom, &alpha, &beta, 4, 4, 16).unwrap();
        assert_eq!((chan.g.nrows(), chan.g.ncols()), (4, 16));
        assert_eq!((chan.h[0].nrows(), chan.h[0].ncols()), (16, 4));

        let rank = |m: &CMat, tol: f64| {
            let sv = crate::tensor::singular_values(m).unwrap();
            let smax = sv.iter().cloned().fold(0.0, f64::max);
            sv.iter().filter(|&&s| s > tol * smax).count()
        };
        assert!(rank(&chan.g, 1e-8) <= l1);
        for h in &chan.h {
            assert!(rank(h, 1e-8) <= l2);
        }
    }

    #[test]
    fn construction_identities_hold_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let geom = draw_geometry(&mut rng, 2, 3);
        let alpha = draw_gains(&mut rng, 2).unwrap();
        let beta = ar_evolve(3, &ArFadingConfig::new(0.5, 4).unwrap(), &mut rng).unwrap();
        let chan = build_channels(&geom, &alpha, &beta, 4, 2, 12).unwrap();

        let g = &chan.a_rx * diag(&chan.alpha) * chan.b_tx.adjoint();
        assert_eq!(g, chan.g);
        for (k, h) in chan.h.iter().enumerate() {
            let want = &chan.b_rx * diag(&chan.beta[k]) * chan.a_tx.adjoint();
            assert_eq!(&want, h);
        }
    }
}
