//! Domain value types. All fields are SI.

use nalgebra::{DMatrix, DVector};

pub const STATE_DIM: usize = 5;
pub const INPUT_DIM: usize = 3;
pub const OUTPUT_DIM: usize = 5;

/// Names of the latent states, in vector order.
pub const STATE_NAMES: [&str; STATE_DIM] = ["d_a", "V_l", "dr_T", "dr_N", "phi_A"];
/// Names of the outputs, in vector order.
pub const OUTPUT_NAMES: [&str; OUTPUT_DIM] = ["L_w", "L_o", "P_c", "P_s", "Q_m"];

/// Latent machine state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVector {
    /// Median aerosol droplet diameter (m).
    pub d_a: f64,
    /// Ink volume in the vial (m³).
    pub v_l: f64,
    /// Deposit thickness on the carrier tube wall (m).
    pub dr_tube: f64,
    /// Deposit thickness on the nozzle wall (m).
    pub dr_nozzle: f64,
    /// Aerosol volume fraction in the carrier stream.
    pub phi_a: f64,
}

impl StateVector {
    pub const D_A: usize = 0;
    pub const V_L: usize = 1;
    pub const DR_TUBE: usize = 2;
    pub const DR_NOZZLE: usize = 3;
    pub const PHI_A: usize = 4;

    pub fn new(d_a: f64, v_l: f64, dr_tube: f64, dr_nozzle: f64, phi_a: f64) -> Self {
        Self { d_a, v_l, dr_tube, dr_nozzle, phi_a }
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [self.d_a, self.v_l, self.dr_tube, self.dr_nozzle, self.phi_a]
    }

    pub fn from_array(a: [f64; STATE_DIM]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3], s[4])
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.to_array())
    }

    pub fn get(&self, i: usize) -> f64 {
        self.to_array()[i]
    }

    pub fn with(&self, i: usize, value: f64) -> Self {
        let mut a = self.to_array();
        a[i] = value;
        Self::from_array(a)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Controlled inputs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InputVector {
    /// Atomizer current (A).
    pub i_a: f64,
    /// Carrier gas flow (m³/s).
    pub q_c: f64,
    /// Sheath gas flow (m³/s).
    pub q_s: f64,
}

impl InputVector {
    pub fn new(i_a: f64, q_c: f64, q_s: f64) -> Self {
        Self { i_a, q_c, q_s }
    }

    pub fn is_valid(&self) -> bool {
        [self.i_a, self.q_c, self.q_s].iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Measured or predicted outputs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OutputVector {
    /// Linewidth (m).
    pub l_w: f64,
    /// Overspray extent (m).
    pub l_o: f64,
    /// Carrier pressure (Pa).
    pub p_c: f64,
    /// Sheath pressure (Pa).
    pub p_s: f64,
    /// Deposited material flow (m³/s).
    pub q_m: f64,
}

impl OutputVector {
    pub fn to_array(&self) -> [f64; OUTPUT_DIM] {
        [self.l_w, self.l_o, self.p_c, self.p_s, self.q_m]
    }

    pub fn from_array(a: [f64; OUTPUT_DIM]) -> Self {
        Self { l_w: a[0], l_o: a[1], p_c: a[2], p_s: a[3], q_m: a[4] }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::from_array([s[0], s[1], s[2], s[3], s[4]])
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.to_array())
    }
}

/// Outputs with individually missing components (camera gaps, dropped samples).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Observation(pub [Option<f64>; OUTPUT_DIM]);

impl Observation {
    pub fn complete(y: &OutputVector) -> Self {
        Self(y.to_array().map(Some))
    }

    pub fn observed_count(&self) -> usize {
        self.0.iter().filter(|v| v.is_some()).count()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.0[i]
    }
}

/// One sample of the process: time, applied inputs, measured outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSeriesRecord {
    pub t: f64,
    pub u: InputVector,
    pub y: Observation,
}

/// Per-state linear drift coefficients (1/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThetaParams {
    pub theta_da: f64,
    pub theta_vl: f64,
    pub theta_drt: f64,
    pub theta_drn: f64,
    pub theta_phia: f64,
}

impl ThetaParams {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [self.theta_da, self.theta_vl, self.theta_drt, self.theta_drn, self.theta_phia]
    }

    pub fn from_array(a: [f64; STATE_DIM]) -> Self {
        Self {
            theta_da: a[0],
            theta_vl: a[1],
            theta_drt: a[2],
            theta_drn: a[3],
            theta_phia: a[4],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Mean and covariance over the latent state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: StateVector,
    pub covariance: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: StateVector, covariance: DMatrix<f64>) -> Self {
        Self { mean, covariance }
    }

    pub fn std_devs(&self) -> [f64; STATE_DIM] {
        std::array::from_fn(|i| self.covariance[(i, i)].max(0.0).sqrt())
    }

    /// Symmetric and PSD up to `-rel * trace` on the smallest eigenvalue.
    pub fn is_valid(&self, rel: f64) -> bool {
        crate::linalg::is_symmetric_psd(&self.covariance, rel)
    }
}
