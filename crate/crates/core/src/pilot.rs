//! Training protocol: Hadamard pilot matrix, DFT reflection-phase schedule,
//! the stacked sensing operator that maps the combined channel to one block
//! of received samples, and noisy block synthesis.
//!
//! The schedules are deterministic functions of `(q, n, t)` and are reused
//! unchanged across blocks; only the channel and the noise vary with `k`.

use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::TAU;
use std::sync::OnceLock;

use crate::channel::complex_gaussian;
use crate::error::{Error, Result};
use crate::tensor::{khatri_rao, kron, pinv, vec_of, CMat, CVec, DEFAULT_PINV_TOL};

/// First `q` rows of the `t x t` Sylvester-Hadamard matrix (`t` a power of
/// two). Rows are mutually orthogonal with `z zᴴ = t I`.
pub fn hadamard_pilots(q: usize, t: usize) -> Result<CMat> {
    if t == 0 || !t.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { t });
    }
    if q > t {
        return Err(Error::QExceedsT { q, t });
    }
    // Sylvester construction: entry (r, c) = (-1)^popcount(r & c).
    Ok(CMat::from_fn(q, t, |r, c| {
        let sign = if (r & c).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        Complex64::new(sign, 0.0)
    }))
}

/// First `n` rows of the `t x t` DFT matrix: entry `(r, c) = exp(-j 2 pi r c / t)`.
/// All entries have unit modulus and `s sᴴ = t I`.
pub fn dft_phase_schedule(n: usize, t: usize) -> Result<CMat> {
    if n > t {
        return Err(Error::NExceedsT { n, t });
    }
    Ok(CMat::from_fn(n, t, |r, c| {
        Complex64::from_polar(1.0, -TAU * (r * c) as f64 / t as f64)
    }))
}

/// Stacked sensing operator of one block: `omega = (s ⋄ z)ᵀ (x) I_m`,
/// of size `(m t) x (m q n)`. Row block `t` equals `s_tᵀ (x) z_tᵀ (x) I_m`.
pub fn build_omega(s: &CMat, z: &CMat, m: usize) -> Result<CMat> {
    if s.ncols() != z.ncols() {
        return Err(Error::DimMismatch(format!(
            "phase schedule has {} slots, pilots have {}",
            s.ncols(),
            z.ncols()
        )));
    }
    let kr = khatri_rao(s, z)?;
    Ok(kron(&kr.transpose(), &CMat::identity(m, m)))
}

/// Fixed training design for one scenario: phase schedule `s` (`n x t`),
/// pilots `z` (`q x t`), and the materialized sensing operator.
#[derive(Debug)]
pub struct PilotDesign {
    pub s: CMat,
    pub z: CMat,
    pub omega: CMat,
    pub m: usize,
    pub q: usize,
    pub n: usize,
    pub t: usize,
    pinv_cache: OnceLock<Option<CMat>>,
}

impl PilotDesign {
    /// Standard design: Hadamard pilots and a DFT phase schedule.
    pub fn new(m: usize, q: usize, n: usize, t: usize) -> Result<Self> {
        let z = hadamard_pilots(q, t)?;
        let s = dft_phase_schedule(n, t)?;
        Self::from_parts(s, z, m)
    }

    /// Design from explicit schedule matrices.
    pub fn from_parts(s: CMat, z: CMat, m: usize) -> Result<Self> {
        let omega = build_omega(&s, &z, m)?;
        Ok(Self {
            m,
            q: z.nrows(),
            n: s.nrows(),
            t: s.ncols(),
            s,
            z,
            omega,
            pinv_cache: OnceLock::new(),
        })
    }

    /// Whether the least-squares recovery condition `t >= q n` holds.
    pub fn identifiable(&self) -> bool {
        self.t >= self.q * self.n
    }

    /// Pseudo-inverse of the sensing operator, computed once and cached.
    pub fn omega_pinv(&self) -> Result<&CMat> {
        self.pinv_cache
            .get_or_init(|| pinv(&self.omega, DEFAULT_PINV_TOL).ok())
            .as_ref()
            .ok_or(Error::SvdFailure)
    }
}

/// Received samples of one block, stacked over the `t` slots.
#[derive(Clone, Debug)]
pub struct ReceivedBlock {
    /// Block index within the frame.
    pub block: usize,
    /// Stacked received vector of length `m t`.
    pub y: CVec,
    pub snr_db: f64,
    /// Per-entry complex noise variance actually applied.
    pub noise_var: f64,
}

/// Noise variance for a block: mean per-antenna per-slot signal power divided
/// by the linear SNR. A zero-power block falls back to unit reference power
/// so that pure-noise synthesis stays meaningful.
fn noise_variance(noiseless: &CVec, m: usize, t: usize, snr_db: f64) -> f64 {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return 0.0;
    }
    let mut p_sig = noiseless.norm_squared() / (t as f64 * m as f64);
    if p_sig == 0.0 {
        p_sig = 1.0;
    }
    p_sig / 10f64.powf(snr_db / 10.0)
}

/// Synthesize one noisy received block: per slot
/// `y_t = g D(s_t) h_k z_t + v_t`, stacked over the `t` slots, with noise
/// variance set from the block's own signal power and the requested SNR.
/// Pass `f64::INFINITY` to disable noise.
pub fn simulate_block(
    block: usize,
    g: &CMat,
    h_k: &CMat,
    design: &PilotDesign,
    snr_db: f64,
    rng: &mut impl Rng,
) -> Result<ReceivedBlock> {
    let (m, q, n, t) = (design.m, design.q, design.n, design.t);
    if g.nrows() != m || g.ncols() != n {
        return Err(Error::DimMismatch(format!(
            "g is {}x{}, design expects {m}x{n}",
            g.nrows(),
            g.ncols()
        )));
    }
    if h_k.nrows() != n || h_k.ncols() != q {
        return Err(Error::DimMismatch(format!(
            "h_k is {}x{}, design expects {n}x{q}",
            h_k.nrows(),
            h_k.ncols()
        )));
    }

    let mut y = CVec::zeros(m * t);
    for slot in 0..t {
        let z_t = design.z.column(slot);
        let s_t = design.s.column(slot);
        let mut reflected = h_k * z_t; // n x 1
        for i in 0..n {
            reflected[i] *= s_t[i];
        }
        let received = g * reflected; // m x 1
        y.rows_mut(slot * m, m).copy_from(&received);
    }

    let noise_var = noise_variance(&y, m, t, snr_db);
    if noise_var > 0.0 {
        for i in 0..y.len() {
            y[i] += complex_gaussian(rng, noise_var);
        }
    }
    Ok(ReceivedBlock {
        block,
        y,
        snr_db,
        noise_var,
    })
}

/// Noiseless stacked block via the vectorized route: `omega vec(h_kᵀ ⋄ g)`.
/// Used as the algebraic cross-check of the slot-wise synthesis.
pub fn stacked_noiseless(g: &CMat, h_k: &CMat, design: &PilotDesign) -> Result<CVec> {
    let combined = khatri_rao(&h_k.transpose(), g)?;
    Ok(&design.omega * vec_of(&combined))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ar_evolve, build_channels, draw_gains, draw_geometry, ArFadingConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hadamard_base_and_errors() {
        let z = hadamard_pilots(2, 2).unwrap();
        assert_eq!(z[(0, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(z[(0, 1)], Complex64::new(1.0, 0.0));
        assert_eq!(z[(1, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(z[(1, 1)], Complex64::new(-1.0, 0.0));

        assert!(matches!(
            hadamard_pilots(3, 2),
            Err(Error::QExceedsT { q: 3, t: 2 })
        ));
        assert!(matches!(
            hadamard_pilots(2, 6),
            Err(Error::NotPowerOfTwo { t: 6 })
        ));
    }

    #[test]
    fn hadamard_rows_orthogonal() {
        let z = hadamard_pilots(4, 64).unwrap();
        let gram = &z * z.adjoint();
        let want = CMat::identity(4, 4) * Complex64::new(64.0, 0.0);
        assert!((gram - want).norm() < 1e-10);
        assert!(z.iter().all(|e| (e.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn dft_schedule_rows() {
        let s = dft_phase_schedule(1, 8).unwrap();
        assert!(s.iter().all(|e| (e - Complex64::new(1.0, 0.0)).norm() < 1e-12));

        let s = dft_phase_schedule(2, 2).unwrap();
        assert!((s[(1, 1)] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);

        let s = dft_phase_schedule(16, 64).unwrap();
        let gram = &s * s.adjoint();
        let want = CMat::identity(16, 16) * Complex64::new(64.0, 0.0);
        assert!((gram - want).norm() < 1e-10);
        for e in s.iter() {
            assert!((e.norm() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            dft_phase_schedule(9, 8),
            Err(Error::NExceedsT { n: 9, t: 8 })
        ));
    }

    #[test]
    fn omega_degenerate_and_paper_dims() {
        let one = CMat::from_element(1, 1, Complex64::new(1.0, 0.0));
        let omega = build_omega(&one, &one, 1).unwrap();
        assert_eq!(omega, CMat::from_element(1, 1, Complex64::new(1.0, 0.0)));

        let design = PilotDesign::new(4, 4, 16, 64).unwrap();
        assert_eq!((design.omega.nrows(), design.omega.ncols()), (256, 256));
        assert!(design.identifiable());
    }

    #[test]
    fn omega_row_blocks_match_slot_operators() {
        let design = PilotDesign::new(2, 2, 3, 8).unwrap();
        let (m, t) = (design.m, design.t);
        for slot in 0..t {
            let s_t = CMat::from_fn(1, design.n, |_, i| design.s[(i, slot)]);
            let z_t = CMat::from_fn(1, design.q, |_, i| design.z[(i, slot)]);
            let row_block = kron(&kron(&s_t, &z_t), &CMat::identity(m, m));
            let got = design.omega.rows(slot * m, m);
            assert!((got - row_block).norm() < 1e-12);
        }
    }

    #[test]
    fn omega_reproduces_slotwise_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let (m, q, n, t) = (2, 3, 4, 12);
        let geom = draw_geometry(&mut rng, 2, 2);
        let alpha = draw_gains(&mut rng, 2).unwrap();
        let beta = ar_evolve(2, &ArFadingConfig::new(0.9, 1).unwrap(), &mut rng).unwrap();
        let chan = build_channels(&geom, &alpha, &beta, m, q, n).unwrap();

        // Non-square design with generic unit-modulus phases and random pilots.
        let s = CMat::from_fn(n, t, |r, c| {
            Complex64::from_polar(1.0, (r * c + r + 1) as f64 * 0.37)
        });
        let z = CMat::from_fn(q, t, |r, c| {
            Complex64::from_polar(1.0, (r * c + c) as f64 * 0.21)
        });
        let design = PilotDesign::from_parts(s, z, m).unwrap();

        let slotwise = simulate_block(0, &chan.g, &chan.h[0], &design, f64::INFINITY, &mut rng)
            .unwrap()
            .y;
        let stacked = stacked_noiseless(&chan.g, &chan.h[0], &design).unwrap();
        assert!((slotwise - stacked).norm() < 1e-10);
    }

    #[test]
    fn full_design_omega_well_conditioned() {
        let design = PilotDesign::new(4, 4, 16, 64).unwrap();
        let sv = crate::tensor::singular_values(&design.omega).unwrap();
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(smin > 1e-6 * smax, "smin {smin}, smax {smax}");
    }

    #[test]
    fn noiseless_block_is_exact_and_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let (m, q, n, t) = (4, 4, 16, 64);
        let geom = draw_geometry(&mut rng, 2, 2);
        let alpha = draw_gains(&mut rng, 2).unwrap();
        let beta = ar_evolve(2, &ArFadingConfig::new(0.75, 1).unwrap(), &mut rng).unwrap();
        let chan = build_channels(&geom, &alpha, &beta, m, q, n).unwrap();
        let design = PilotDesign::new(m, q, n, t).unwrap();

        let block = simulate_block(0, &chan.g, &chan.h[0], &design, f64::INFINITY, &mut rng).unwrap();
        assert_eq!(block.noise_var, 0.0);
        let stacked = stacked_noiseless(&chan.g, &chan.h[0], &design).unwrap();
        assert!((&block.y - &stacked).norm() < 1e-10);

        // doubling the channel doubles the noiseless output
        let g2 = &chan.g * Complex64::new(2.0, 0.0);
        let block2 = simulate_block(0, &g2, &chan.h[0], &design, f64::INFINITY, &mut rng).unwrap();
        assert!((&block2.y - &block.y * Complex64::new(2.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn zero_channel_gives_pure_noise_at_reference_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (m, q, n, t) = (2, 2, 4, 16);
        let design = PilotDesign::new(m, q, n, t).unwrap();
        let g = CMat::zeros(m, n);
        let h = CMat::zeros(n, q);

        let snr_db = 7.0;
        let want_var = 10f64.powf(-snr_db / 10.0);
        let mut pow = 0.0;
        let mut count = 0usize;
        for k in 0..400 {
            let block = simulate_block(k, &g, &h, &design, snr_db, &mut rng).unwrap();
            assert!((block.noise_var - want_var).abs() < 1e-12);
            pow += block.y.norm_squared();
            count += block.y.len();
        }
        let empirical = pow / count as f64;
        assert!(
            (empirical / want_var - 1.0).abs() < 0.05,
            "empirical {empirical} vs {want_var}"
        );
    }

    #[test]
    fn noise_variance_tracks_snr() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let (m, q, n, t) = (4, 4, 16, 64);
        let geom = draw_geometry(&mut rng, 2, 2);
        let alpha = draw_gains(&mut rng, 2).unwrap();
        let beta = ar_evolve(2, &ArFadingConfig::new(0.75, 1).unwrap(), &mut rng).unwrap();
        let chan = build_channels(&geom, &alpha, &beta, m, q, n).unwrap();
        let design = PilotDesign::new(m, q, n, t).unwrap();

        let clean = simulate_block(0, &chan.g, &chan.h[0], &design, f64::INFINITY, &mut rng).unwrap();
        let p_sig = clean.y.norm_squared() / (t as f64 * m as f64);
        let noisy = simulate_block(0, &chan.g, &chan.h[0], &design, 10.0, &mut rng).unwrap();
        assert!((noisy.noise_var - p_sig / 10.0).abs() < 1e-12);
    }
}
