//! JSON shapes of domain values, in display units (µm, mL, sccm, mA, Pa).

use ajtwin_core::units::{from_si, to_si, Unit};
use ajtwin_core::{InputVector, Observation, OutputVector, StateVector, ThetaParams};
use serde_json::{json, Map, Value};

use crate::error::{ApiError, ApiResult};

pub const INPUT_FIELDS: [(&str, Unit); 3] = [("I_A", Unit::Milliamp), ("Q_c", Unit::Sccm), ("Q_s", Unit::Sccm)];
pub const OUTPUT_FIELDS: [(&str, Unit); 5] = [
    ("L_w", Unit::Micrometre),
    ("L_o", Unit::Micrometre),
    ("P_c", Unit::Pascal),
    ("P_s", Unit::Pascal),
    ("Q_m", Unit::Sccm),
];
pub const STATE_FIELDS: [(&str, Unit); 5] = [
    ("d_a", Unit::Micrometre),
    ("V_l", Unit::Millilitre),
    ("dr_T", Unit::Micrometre),
    ("dr_N", Unit::Micrometre),
    ("phi_A", Unit::Dimensionless),
];
pub const THETA_FIELDS: [&str; 5] = ["da", "Vl", "drT", "drN", "phiA"];

fn object<I: IntoIterator<Item = (&'static str, Value)>>(items: I) -> Value {
    Value::Object(items.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<Map<_, _>>())
}

pub fn input(u: &InputVector) -> Value {
    let a = [u.i_a, u.q_c, u.q_s];
    object(INPUT_FIELDS.iter().zip(a).map(|((k, unit), v)| (*k, json!(from_si(v, *unit)))))
}

pub fn observation(y: &Observation) -> Value {
    object(OUTPUT_FIELDS.iter().zip(y.0).map(|((k, unit), v)| (*k, json!(v.map(|v| from_si(v, *unit))))))
}

pub fn outputs(y: &OutputVector) -> Value {
    object(OUTPUT_FIELDS.iter().zip(y.to_array()).map(|((k, unit), v)| (*k, json!(from_si(v, *unit)))))
}

/// Output values scaled like standard deviations (no offset).
pub fn outputs_raw(a: [f64; 5]) -> Value {
    object(OUTPUT_FIELDS.iter().zip(a).map(|((k, unit), v)| (*k, json!(from_si(v, *unit)))))
}

pub fn state(x: &StateVector) -> Value {
    object(STATE_FIELDS.iter().zip(x.to_array()).map(|((k, unit), v)| (*k, json!(from_si(v, *unit)))))
}

/// Covariance diagonal in squared display units.
pub fn state_variance(diag: [f64; 5]) -> Value {
    object(STATE_FIELDS.iter().zip(diag).map(|((k, unit), v)| (*k, json!(v / unit.si_factor().powi(2)))))
}

pub fn theta(t: &ThetaParams) -> Value {
    object(THETA_FIELDS.iter().zip(t.to_array()).map(|(k, v)| (*k, json!(v))))
}

/// Parses `{"da": …, …}` (1/s); absent fields keep their value in `base`.
pub fn parse_theta(v: &Value, base: ThetaParams) -> ApiResult<ThetaParams> {
    let obj = v.as_object().ok_or_else(|| ApiError::bad_request("theta must be an object"))?;
    let mut a = base.to_array();
    for (k, val) in obj {
        let i = THETA_FIELDS
            .iter()
            .position(|f| f == k)
            .ok_or_else(|| ApiError::bad_request(format!("unknown theta field `{k}`")))?;
        a[i] = number(val, k)?;
    }
    Ok(ThetaParams::from_array(a))
}

/// Parses a partial input object; absent fields keep their value in `base`.
pub fn parse_input(v: &Value, base: InputVector) -> ApiResult<InputVector> {
    let obj = v.as_object().ok_or_else(|| ApiError::bad_request("input must be an object"))?;
    let mut a = [base.i_a, base.q_c, base.q_s];
    for (k, val) in obj {
        let i = input_index(k)?;
        a[i] = to_si(number(val, k)?, INPUT_FIELDS[i].1);
    }
    Ok(InputVector::new(a[0], a[1], a[2]))
}

pub fn input_index(name: &str) -> ApiResult<usize> {
    INPUT_FIELDS
        .iter()
        .position(|(f, _)| *f == name)
        .ok_or_else(|| ApiError::bad_request(format!("unknown input `{name}` (expected I_A, Q_c or Q_s)")))
}

/// Parses a partial output shift; absent fields are zero.
pub fn parse_output_shift(v: &Value) -> ApiResult<[f64; 5]> {
    let obj = v.as_object().ok_or_else(|| ApiError::bad_request("disturbance must be an object"))?;
    let mut a = [0.0; 5];
    for (k, val) in obj {
        let i = OUTPUT_FIELDS
            .iter()
            .position(|(f, _)| f == k)
            .ok_or_else(|| ApiError::bad_request(format!("unknown output `{k}`")))?;
        a[i] = to_si(number(val, k)?, OUTPUT_FIELDS[i].1);
    }
    Ok(a)
}

pub fn number(v: &Value, name: &str) -> ApiResult<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ApiError::bad_request(format!("`{name}` must be a finite number")))
}

/// Typed accessors over a request's `params` object.
pub struct Params<'a>(pub &'a Value);

impl<'a> Params<'a> {
    pub fn get(&self, key: &str) -> Option<&'a Value> {
        self.0.get(key).filter(|v| !v.is_null())
    }

    pub fn str(&self, key: &str) -> ApiResult<Option<&'a str>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.as_str().map(Some).ok_or_else(|| ApiError::bad_request(format!("`{key}` must be a string"))),
        }
    }

    pub fn req_str(&self, key: &str) -> ApiResult<&'a str> {
        self.str(key)?.ok_or_else(|| ApiError::bad_request(format!("missing `{key}`")))
    }

    pub fn u64(&self, key: &str) -> ApiResult<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| ApiError::bad_request(format!("`{key}` must be a non-negative integer"))),
        }
    }

    pub fn f64(&self, key: &str) -> ApiResult<Option<f64>> {
        self.get(key).map(|v| number(v, key)).transpose()
    }
}
