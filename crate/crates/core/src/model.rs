//! Physical parameter space and model construction.
//!
//! Builds the free and interaction Hamiltonians, the temperature-dependent
//! jump rates, and the ten elementary jump operators of the detector on the
//! 24-dimensional composite space. Energies are in natural units
//! (hbar = k_B = 1) with the target energy E_S as the energy unit.

use serde::{Deserialize, Serialize};

use crate::hilbert::{self, dagger, ketbra, on_g, on_mc, on_mh, BasisState, DIM_G, DIM_MC, DIM_MH};
use crate::{CMatrix, Error, Result, C64};

/// Full physical parameter set of one detector realisation.
///
/// Derived quantities: `E_C = f_EC * E_G`, `E_H = E_C + E_G`, gain
/// `G = E_G / E_S`. The hot-bath temperature follows from the virtual
/// temperature `T_V` via [`hot_temperature`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Energy of the target particle; the model's energy unit.
    #[serde(rename = "E_S")]
    pub e_s: f64,
    /// First gap of the gain medium, equal to the machine's virtual-qubit gap.
    #[serde(rename = "E_G")]
    pub e_g: f64,
    /// Dimensionless ratio fixing the cold-qubit gap, E_C = f_EC * E_G.
    #[serde(rename = "f_EC")]
    pub f_ec: f64,
    /// Cold-bath temperature (> 0).
    #[serde(rename = "T_C")]
    pub t_c: f64,
    /// Virtual temperature of the machine (negative in the engine regime).
    #[serde(rename = "T_V")]
    pub t_v: f64,
    /// Machine-gain coherent coupling strength.
    #[serde(rename = "g_MG")]
    pub g_mg: f64,
    /// System-gain coherent coupling strength.
    #[serde(rename = "g_SG")]
    pub g_sg: f64,
    /// Machine-bath dissipation prefactor.
    #[serde(rename = "gamma_M")]
    pub gamma_m: f64,
    /// Gain-medium thermalization prefactor.
    #[serde(rename = "gamma_G")]
    pub gamma_g: f64,
    /// Detection-channel prefactor.
    #[serde(rename = "gamma_D")]
    pub gamma_d: f64,
}

impl DetectorParams {
    /// Cold-qubit gap.
    pub fn e_c(&self) -> f64 {
        self.f_ec * self.e_g
    }

    /// Hot-qubit gap.
    pub fn e_h(&self) -> f64 {
        self.e_c() + self.e_g
    }

    /// Energy amplification factor G = E_G / E_S.
    pub fn gain(&self) -> f64 {
        self.e_g / self.e_s
    }

    /// Check the static parameter invariants (positivity of energies and
    /// temperature, non-negative couplings).
    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, f64); 4] = [
            ("E_S", self.e_s),
            ("E_G", self.e_g),
            ("f_EC", self.f_ec),
            ("T_C", self.t_c),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    constraint: "must be finite and > 0",
                });
            }
        }
        let nonneg: [(&'static str, f64); 4] = [
            ("g_MG", self.g_mg),
            ("g_SG", self.g_sg),
            ("gamma_M", self.gamma_m),
            ("gamma_G", self.gamma_g),
        ];
        for (name, value) in nonneg {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    constraint: "must be finite and >= 0",
                });
            }
        }
        if !(self.gamma_d >= 0.0) || !self.gamma_d.is_finite() {
            return Err(Error::InvalidParameter {
                name: "gamma_D",
                value: self.gamma_d,
                constraint: "must be finite and >= 0",
            });
        }
        if self.t_v == 0.0 || !self.t_v.is_finite() {
            return Err(Error::InvalidParameter {
                name: "T_V",
                value: self.t_v,
                constraint: "must be finite and nonzero",
            });
        }
        Ok(())
    }

    /// Engine-regime gate: the machine must be population-inverted
    /// (T_V < 0) with a physical hot bath (T_H > 0).
    pub fn engine_regime(&self) -> Result<f64> {
        let t_h = hot_temperature(self.t_v, self.t_c, self.e_c(), self.e_h())?;
        if self.t_v >= 0.0 {
            return Err(Error::OutOfRegime {
                t_v: self.t_v,
                t_c: self.t_c,
                t_h,
            });
        }
        Ok(t_h)
    }
}

/// Hot-bath temperature from the virtual temperature of the two-qubit
/// machine: `T_H = E_H / (E_C/T_C + (E_H - E_C)/T_V)`.
///
/// Rejects parameter points whose map lands at a non-physical (<= 0 or
/// non-finite) hot temperature.
pub fn hot_temperature(t_v: f64, t_c: f64, e_c: f64, e_h: f64) -> Result<f64> {
    debug_assert!(t_c > 0.0 && e_h > e_c && e_c > 0.0);
    if t_v == 0.0 {
        return Err(Error::InvalidParameter {
            name: "T_V",
            value: t_v,
            constraint: "must be nonzero",
        });
    }
    let t_h = e_h / (e_c / t_c + (e_h - e_c) / t_v);
    if !t_h.is_finite() || t_h <= 0.0 {
        return Err(Error::OutOfRegime { t_v, t_c, t_h });
    }
    Ok(t_h)
}

/// Dissipation channels of the model.
///
/// Each channel couples one transition to one bath: the machine qubits to
/// the cold and hot baths, the two gain-medium gaps to the cold bath, and
/// the 0-2 gain transition to the detection channel (also at `T_C`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    /// Cold machine qubit <-> cold bath (gap E_C).
    MachineCold,
    /// Hot machine qubit <-> hot bath (gap E_H).
    MachineHot,
    /// Gain-medium 0 <-> 1 transition <-> cold bath (gap E_G).
    GainFirst,
    /// Gain-medium 1 <-> 2 transition <-> cold bath (gap E_S).
    GainSecond,
    /// Gain-medium 0 <-> 2 detection channel (gap E_S + E_G).
    Detection,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::MachineCold,
        Channel::MachineHot,
        Channel::GainFirst,
        Channel::GainSecond,
        Channel::Detection,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Channel::MachineCold => "M_C",
            Channel::MachineHot => "M_H",
            Channel::GainFirst => "G_10",
            Channel::GainSecond => "G_21",
            Channel::Detection => "D",
        }
    }

    /// Energy quantum exchanged with the bath in one jump.
    pub fn gap(&self, p: &DetectorParams) -> f64 {
        match self {
            Channel::MachineCold => p.e_c(),
            Channel::MachineHot => p.e_h(),
            Channel::GainFirst => p.e_g,
            Channel::GainSecond => p.e_s,
            Channel::Detection => p.e_s + p.e_g,
        }
    }

    /// Bare dissipation prefactor gamma of this channel.
    pub fn prefactor(&self, p: &DetectorParams) -> f64 {
        match self {
            Channel::MachineCold | Channel::MachineHot => p.gamma_m,
            Channel::GainFirst | Channel::GainSecond => p.gamma_g,
            Channel::Detection => p.gamma_d,
        }
    }
}

/// One excitation/decay rate pair of a channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    /// Excitation rate Gamma^+ (absorption from the bath).
    pub plus: f64,
    /// Decay rate Gamma^- (emission into the bath).
    pub minus: f64,
}

/// Temperature-dependent jump rates for all five channels.
///
/// Each pair obeys detailed balance `Gamma^+/Gamma^- = exp(-E/T)` and the
/// normalization `Gamma^+ + Gamma^- = gamma` through the partition function
/// `Z = 1 + exp(-E/T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSet {
    pub machine_cold: RatePair,
    pub machine_hot: RatePair,
    pub gain_first: RatePair,
    pub gain_second: RatePair,
    pub detection: RatePair,
    /// Derived hot-bath temperature.
    pub t_h: f64,
}

impl RateSet {
    pub fn pair(&self, channel: Channel) -> RatePair {
        match channel {
            Channel::MachineCold => self.machine_cold,
            Channel::MachineHot => self.machine_hot,
            Channel::GainFirst => self.gain_first,
            Channel::GainSecond => self.gain_second,
            Channel::Detection => self.detection,
        }
    }

    /// Bath temperature seen by a channel.
    pub fn bath_temperature(&self, channel: Channel, p: &DetectorParams) -> f64 {
        match channel {
            Channel::MachineHot => self.t_h,
            _ => p.t_c,
        }
    }
}

fn thermal_pair(gamma: f64, gap: f64, temp: f64) -> RatePair {
    let boltzmann = (-gap / temp).exp();
    let z = 1.0 + boltzmann;
    RatePair {
        plus: gamma * boltzmann / z,
        minus: gamma / z,
    }
}

/// Derive the five channel rate pairs from the physical parameters.
pub fn build_rates(params: &DetectorParams) -> Result<RateSet> {
    params.validate()?;
    let t_h = hot_temperature(params.t_v, params.t_c, params.e_c(), params.e_h())?;
    Ok(RateSet {
        machine_cold: thermal_pair(params.gamma_m, params.e_c(), params.t_c),
        machine_hot: thermal_pair(params.gamma_m, params.e_h(), t_h),
        gain_first: thermal_pair(params.gamma_g, params.e_g, params.t_c),
        gain_second: thermal_pair(params.gamma_g, params.e_s, params.t_c),
        detection: thermal_pair(params.gamma_d, params.e_s + params.e_g, params.t_c),
        t_h,
    })
}

/// Energy of one product basis state under the free Hamiltonian.
pub fn state_energy(params: &DetectorParams, st: BasisState) -> f64 {
    let gain_level = match st.g {
        0 => 0.0,
        1 => params.e_g,
        _ => params.e_g + params.e_s,
    };
    st.m_c as f64 * params.e_c()
        + st.m_h as f64 * params.e_h()
        + gain_level
        + st.s as f64 * params.e_s
}

/// Free Hamiltonian H_0 = H_M + H_G + H_S, diagonal in the product basis.
pub fn build_free_hamiltonian(params: &DetectorParams) -> CMatrix {
    let mut h = CMatrix::zeros((hilbert::DIM, hilbert::DIM));
    for st in hilbert::basis_states() {
        let k = st.index();
        h[[k, k]] = C64::new(state_energy(params, st), 0.0);
    }
    h
}

/// Interaction Hamiltonian: the machine-gain swap
/// `g_MG |101><010|` on (M_C, M_H, G) and the system-gain swap
/// `g_SG |20><11|` on (G, S), plus Hermitian conjugates. Both transitions
/// are resonant, so H_I commutes with H_0.
pub fn build_interaction_hamiltonian(params: &DetectorParams) -> CMatrix {
    let mg = hilbert::embed(
        &ketbra(DIM_MC, 1, 0),
        &ketbra(DIM_MH, 0, 1),
        &ketbra(DIM_G, 1, 0),
        &hilbert::identity(hilbert::DIM_S),
    );
    let sg = hilbert::embed(
        &hilbert::identity(DIM_MC),
        &hilbert::identity(DIM_MH),
        &ketbra(DIM_G, 2, 1),
        &ketbra(hilbert::DIM_S, 0, 1),
    );
    let g_mg = C64::new(params.g_mg, 0.0);
    let g_sg = C64::new(params.g_sg, 0.0);
    let mut h = &mg * g_mg + &sg * g_sg;
    h = &h + &dagger(&h);
    h
}

/// Total Hamiltonian H = H_0 + H_I.
pub fn build_hamiltonian(params: &DetectorParams) -> CMatrix {
    build_free_hamiltonian(params) + build_interaction_hamiltonian(params)
}

/// A single elementary jump operator with its dissipation rate and the
/// energy quantum it deposits into its bath (positive for emission).
#[derive(Debug, Clone)]
pub struct JumpOperator {
    pub channel: Channel,
    /// Raising (+) or lowering (-) direction relative to the system.
    pub raising: bool,
    /// 24x24 transition operator (a single elementary transition tensored
    /// with identities).
    pub matrix: CMatrix,
    /// Rate multiplying the dissipator D[L].
    pub rate: f64,
    /// Signed energy quantum carried into the bath by one jump.
    pub energy_quantum: f64,
    /// Temperature of the bath this channel couples to.
    pub bath_temperature: f64,
}

/// Build the ten jump operators (five channels times two directions).
///
/// The target system S has no dissipator of its own.
pub fn build_jump_operators(params: &DetectorParams, rates: &RateSet) -> Vec<JumpOperator> {
    let sigma_minus_mc = on_mc(&ketbra(DIM_MC, 0, 1));
    let sigma_minus_mh = on_mh(&ketbra(DIM_MH, 0, 1));
    let lower_g10 = on_g(&ketbra(DIM_G, 0, 1));
    let lower_g21 = on_g(&ketbra(DIM_G, 1, 2));
    let lower_d = on_g(&ketbra(DIM_G, 0, 2));

    let mut ops = Vec::with_capacity(10);
    for (channel, lower) in [
        (Channel::MachineCold, sigma_minus_mc),
        (Channel::MachineHot, sigma_minus_mh),
        (Channel::GainFirst, lower_g10),
        (Channel::GainSecond, lower_g21),
        (Channel::Detection, lower_d),
    ] {
        let pair = rates.pair(channel);
        let gap = channel.gap(params);
        let bath = rates.bath_temperature(channel, params);
        ops.push(JumpOperator {
            channel,
            raising: false,
            matrix: lower.clone(),
            rate: pair.minus,
            energy_quantum: gap,
            bath_temperature: bath,
        });
        ops.push(JumpOperator {
            channel,
            raising: true,
            matrix: dagger(&lower),
            rate: pair.plus,
            energy_quantum: -gap,
            bath_temperature: bath,
        });
    }
    ops
}
