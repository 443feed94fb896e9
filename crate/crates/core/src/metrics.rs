//! Figures of merit and entropy production of one detector realisation.
//!
//! All quantities are evaluated from the Liouvillian spectral data in closed
//! form: the detection efficiency is the time-integrated excess detection
//! current `eta_D = -<<1| J_D L^+ |rho_0>>`, the jitter is the variance of
//! the normalized excess current obtained from `(L^+)^2` and `(L^+)^3`, the
//! dark-count rate is the steady-state current, the dead time is the inverse
//! spectral gap, and the entropy production splits into a steady-state rate
//! and a transient excess. Every closed form is anchored against independent
//! time-quadrature oracles in the test suite; where historical sign
//! conventions differ, the quadrature definition wins.
//!
//! Scalars are computed in complex arithmetic; the real part is returned and
//! the largest imaginary residue encountered is reported alongside.

use crate::hilbert::{self, detector_tensor_s, ketbra, partial_trace_s, DIM, DIM_S};
use crate::liouville::{vectorize, CurrentSuperop, Liouvillian, SpectralData, SpectralOptions};
use crate::model::{Channel, DetectorParams};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Detection efficiency below which the normalized excess-current
/// distribution, and therefore the jitter, is undefined.
pub const DEFAULT_EPS_ETA: f64 = 1e-6;

/// Slack on the thermal population-integral inequality check.
const INEQUALITY_SLACK: f64 = 1e-10;

/// Detection-ready conditioned state: the detector marginal of the steady
/// state with the target system replaced by its excited state,
/// `rho_0 = Tr_S[rho_ss] (x) |1><1|_S`.
#[derive(Debug, Clone)]
pub struct ConditionedState {
    pub rho0: CMatrix,
}

impl ConditionedState {
    pub fn vec(&self) -> CVector {
        vectorize(&self.rho0)
    }
}

/// Build the conditioned initial state from the steady state.
pub fn initial_state(spectral: &SpectralData) -> ConditionedState {
    let detector = partial_trace_s(&spectral.steady_state);
    let excited = ketbra(DIM_S, 1, 1);
    ConditionedState {
        rho0: detector_tensor_s(&detector, &excited),
    }
}

/// Time-integrated excess occupations of the three gain levels,
/// `I_k = integral_0^inf (P_k(t) - P_k^ss) dt`, with the thermal ordering
/// check `I_1 <= I_0 exp(-E_G/T_C)`.
#[derive(Debug, Clone, Copy)]
pub struct PopulationIntegrals {
    pub i0: f64,
    pub i1: f64,
    pub i2: f64,
    pub inequality_ok: bool,
}

/// All figures of merit and entropy quantities at one parameter point.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub params: DetectorParams,
    /// Derived hot-bath temperature.
    pub t_h: f64,
    /// Detection efficiency in [0, 1].
    pub eta_d: f64,
    /// Conjectured maximal efficiency 1/(1 + gamma_G/gamma_D).
    pub eta_max: f64,
    /// Dark-count rate (steady-state detection current).
    pub r_dc: f64,
    /// Detection jitter as the variance of the normalized excess current
    /// (time squared); undefined when eta_D is below the threshold.
    pub jitter: Option<f64>,
    /// Square root of the variance, the RMS timing spread.
    pub jitter_rms: Option<f64>,
    /// Mean detection time of the normalized excess current.
    pub mean_detection_time: Option<f64>,
    /// Reset timescale D = -1/Re(lambda_1).
    pub dead_time: f64,
    /// Slowest nonzero Liouvillian eigenvalue.
    pub lambda1: C64,
    /// Steady-state entropy production rate.
    pub sigma_ss_rate: f64,
    /// Transient excess entropy per detection event.
    pub sigma_trans: f64,
    /// Total entropy per detection event, rate * dead time + transient.
    pub sigma_tot: f64,
    /// Energy gain G = E_G/E_S.
    pub gain: f64,
    pub population_integrals: PopulationIntegrals,
    /// Largest imaginary residue discarded when taking real parts.
    pub max_imag_residue: f64,
}

/// Tracks the imaginary residues discarded when realizing complex scalars.
#[derive(Debug, Default, Clone, Copy)]
struct ResidueTracker {
    max: f64,
}

impl ResidueTracker {
    fn real(&mut self, z: C64) -> f64 {
        self.max = self.max.max(z.im.abs());
        z.re
    }
}

fn efficiency_complex(spectral: &SpectralData, j_d: &CurrentSuperop, rho0: &CVector) -> C64 {
    -j_d.expectation_row().dot(&spectral.apply_drazin(rho0))
}

/// Detection efficiency `eta_D = -<<1| J_D L^+ |rho_0>>`.
pub fn detection_efficiency(
    spectral: &SpectralData,
    j_d: &CurrentSuperop,
    rho0: &ConditionedState,
) -> f64 {
    efficiency_complex(spectral, j_d, &rho0.vec()).re
}

/// Dark-count rate `R_dc = <<1| J_D |rho_ss>>`.
pub fn dark_count_rate(spectral: &SpectralData, j_d: &CurrentSuperop) -> f64 {
    j_d.expectation_row().dot(&spectral.steady_vec()).re
}

/// Jitter (temporal variance), RMS spread, and mean detection time of the
/// normalized excess detection current.
#[derive(Debug, Clone, Copy)]
pub struct Jitter {
    pub variance: f64,
    pub rms: f64,
    pub mean_time: f64,
}

/// Detection jitter from the second and first moments of the normalized
/// excess current:
/// `Var = -2 <<1|(J_D/eta)(L^+)^3|rho_0>> - [<<1|(J_D/eta)(L^+)^2|rho_0>>]^2`.
pub fn detection_jitter(
    spectral: &SpectralData,
    j_d: &CurrentSuperop,
    rho0: &ConditionedState,
    eta_d: f64,
    eps_eta: f64,
) -> Result<Jitter> {
    if !(eta_d > eps_eta) {
        return Err(Error::EfficiencyTooSmall { eta: eta_d, eps_eta });
    }
    let row = j_d.expectation_row();
    let w1 = spectral.apply_drazin(&rho0.vec());
    let w2 = spectral.apply_drazin(&w1);
    let w3 = spectral.apply_drazin(&w2);
    let eta = C64::new(eta_d, 0.0);
    // Mean of the normalized distribution; positive because the first-moment
    // integral of e^{lambda t} carries 1/lambda^2.
    let mean = row.dot(&w2) / eta;
    let second = row.dot(&w3) * C64::new(-2.0, 0.0) / eta;
    let variance = (second - mean * mean).re;
    Ok(Jitter {
        variance,
        rms: variance.max(0.0).sqrt(),
        mean_time: mean.re,
    })
}

/// Reset timescale `D = -1/Re(lambda_1)`.
pub fn dead_time(spectral: &SpectralData) -> f64 {
    -1.0 / spectral.lambda1().re
}

fn cold_entropy_row(liou: &Liouvillian) -> CVector {
    // Energy-weighted cold-bath current functional
    // E_C J_MC + E_G J_G10 + E_S J_G21 (the detection channel is the signal,
    // not housekeeping, and the hot-bath flow enters through the machine).
    let p = &liou.params;
    let weighted = [
        (Channel::MachineCold, p.e_c()),
        (Channel::GainFirst, p.e_g),
        (Channel::GainSecond, p.e_s),
    ];
    let mut row = CVector::zeros(liou.matrix.nrows());
    for (ch, energy) in weighted {
        row = row + liou.current(ch).expectation_row() * C64::new(energy, 0.0);
    }
    row
}

/// Steady-state entropy production rate
/// `Sigma_ss = (1/T_C) <<1| (E_C J_MC + E_G J_G10 + E_S J_G21) |rho_ss>>`.
pub fn entropy_rate_ss(spectral: &SpectralData, liou: &Liouvillian) -> f64 {
    (cold_entropy_row(liou).dot(&spectral.steady_vec()) / liou.params.t_c).re
}

/// Transient excess entropy production
/// `Sigma_trans = (1/T_C) integral_0^inf (E_C Jt_MC + E_G Jt_G10 + E_S Jt_G21) dt
///            = -(1/T_C) <<1| (...) L^+ |rho_0>>`.
pub fn entropy_transient(
    spectral: &SpectralData,
    liou: &Liouvillian,
    rho0: &ConditionedState,
) -> f64 {
    let row = cold_entropy_row(liou);
    (-row.dot(&spectral.apply_drazin(&rho0.vec())) / liou.params.t_c).re
}

/// Total entropy per detection event, `Sigma_tot = Sigma_ss * D + Sigma_trans`
/// with `D = -1/Re(lambda_1)`.
pub fn entropy_total(sigma_ss_rate: f64, lambda1: C64, sigma_trans: f64) -> f64 {
    sigma_ss_rate * (-1.0 / lambda1.re) + sigma_trans
}

/// Conjectured maximal detection efficiency `1/(1 + gamma_G/gamma_D)`,
/// approached in the low-temperature limit.
pub fn max_efficiency_bound(gamma_g: f64, gamma_d: f64) -> Result<f64> {
    if gamma_d <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "gamma_D",
            value: gamma_d,
            constraint: "must be > 0 for the efficiency bound",
        });
    }
    Ok(1.0 / (1.0 + gamma_g / gamma_d))
}

/// Row functional extracting the occupation of gain level `k`,
/// `P_k = Tr[Pi_k rho]` on vectorized states.
pub fn gain_population_row(level: usize) -> CVector {
    let mut row = CVector::zeros(DIM * DIM);
    for st in hilbert::basis_states() {
        if st.g == level {
            row[st.index() * (DIM + 1)] = C64::new(1.0, 0.0);
        }
    }
    row
}

/// Time-integrated excess gain-level occupations
/// `I_k = -<<Pi_k| L^+ |rho_0>>` and the inequality
/// `I_1 <= I_0 exp(-E_G/T_C)`.
pub fn population_excess_integrals(
    spectral: &SpectralData,
    liou: &Liouvillian,
    rho0: &ConditionedState,
) -> PopulationIntegrals {
    let w = spectral.apply_drazin(&rho0.vec());
    let mut vals = [0.0; 3];
    for (k, val) in vals.iter_mut().enumerate() {
        *val = (-gain_population_row(k).dot(&w)).re;
    }
    let bound = vals[0] * (-liou.params.e_g / liou.params.t_c).exp();
    PopulationIntegrals {
        i0: vals[0],
        i1: vals[1],
        i2: vals[2],
        inequality_ok: vals[1] <= bound + INEQUALITY_SLACK,
    }
}

/// Options for the full per-point pipeline.
#[derive(Debug, Clone, Copy)]
pub struct MetricsOptions {
    pub spectral: SpectralOptions,
    pub eps_eta: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            spectral: SpectralOptions::default(),
            eps_eta: DEFAULT_EPS_ETA,
        }
    }
}

/// Everything computed for one parameter point: the assembled Liouvillian,
/// its spectral data, and the conditioned initial state.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub liouvillian: Liouvillian,
    pub spectral: SpectralData,
    pub rho0: ConditionedState,
    pub options: MetricsOptions,
}

impl Pipeline {
    /// Run the full pipeline: parameter validation, engine-regime gate,
    /// Liouvillian assembly, spectral decomposition, conditioning.
    pub fn run(params: &DetectorParams, options: MetricsOptions) -> Result<Pipeline> {
        params.validate()?;
        params.engine_regime()?;
        let liouvillian = crate::liouville::assemble_liouvillian(params)?;
        let spectral = crate::liouville::spectral_decompose(&liouvillian, options.spectral)?;
        spectral.check_drazin_conditioning()?;
        let rho0 = initial_state(&spectral);
        Ok(Pipeline {
            liouvillian,
            spectral,
            rho0,
            options,
        })
    }

    /// Evaluate the full metrics report.
    pub fn metrics(&self) -> Result<MetricsReport> {
        let mut residue = ResidueTracker::default();
        let params = &self.liouvillian.params;
        let sp = &self.spectral;
        let j_d = self.liouvillian.current(Channel::Detection);

        let lambda1 = sp.lambda1();
        if lambda1.re >= 0.0 {
            return Err(Error::DivergentIntegral { re: lambda1.re });
        }

        let rho0_vec = self.rho0.vec();
        let eta_d = residue.real(efficiency_complex(sp, j_d, &rho0_vec));
        let r_dc = residue.real(j_d.expectation_row().dot(&sp.steady_vec()));
        let jitter = match detection_jitter(sp, j_d, &self.rho0, eta_d, self.options.eps_eta) {
            Ok(j) => Some(j),
            Err(Error::EfficiencyTooSmall { .. }) => None,
            Err(e) => return Err(e),
        };
        let sigma_ss_rate = entropy_rate_ss(sp, &self.liouvillian);
        let sigma_trans = entropy_transient(sp, &self.liouvillian, &self.rho0);
        let population_integrals = population_excess_integrals(sp, &self.liouvillian, &self.rho0);

        Ok(MetricsReport {
            params: *params,
            t_h: self.liouvillian.rates.t_h,
            eta_d,
            eta_max: max_efficiency_bound(params.gamma_g, params.gamma_d)?,
            r_dc,
            jitter: jitter.map(|j| j.variance),
            jitter_rms: jitter.map(|j| j.rms),
            mean_detection_time: jitter.map(|j| j.mean_time),
            dead_time: dead_time(sp),
            lambda1,
            sigma_ss_rate,
            sigma_trans,
            sigma_tot: entropy_total(sigma_ss_rate, lambda1, sigma_trans),
            gain: params.gain(),
            population_integrals,
            max_imag_residue: residue.max,
        })
    }
}

/// Convenience wrapper: pipeline plus metrics in one call.
pub fn compute_metrics(params: &DetectorParams, options: MetricsOptions) -> Result<MetricsReport> {
    Pipeline::run(params, options)?.metrics()
}
