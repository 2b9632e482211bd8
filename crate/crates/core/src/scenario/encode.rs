//! Feature encodings of scenario inputs.
//!
//! Every feature row ends with the same intervention descriptor of
//! [`DESCRIPTOR_WIDTH`] values: the three post-change contact matrices
//! (row-major, 36 values each), the three change days and the three
//! reduction factors. Slots beyond the number of change points are zero.
//! Compartment counts enter as `ln(1 + x)`; the descriptor is raw.

use super::ScenarioError;
use crate::epi::contact::{ContactPolicy, MAX_CHANGE_POINTS};
use crate::epi::params::AGE_GROUPS;
use crate::epi::state::{CompartmentState, COMPARTMENTS};

pub const INPUT_DAYS: usize = 5;
pub const MATRIX_WIDTH: usize = AGE_GROUPS * AGE_GROUPS;
pub const DESCRIPTOR_WIDTH: usize = MAX_CHANGE_POINTS * MATRIX_WIDTH + 2 * MAX_CHANGE_POINTS;
/// One row per input day: that day's compartments plus the descriptor.
pub const NONSPATIAL_WIDTH: usize = COMPARTMENTS + DESCRIPTOR_WIDTH;
/// One row per node: all input days' compartments plus the descriptor.
pub const SPATIAL_WIDTH: usize = INPUT_DAYS * COMPARTMENTS + DESCRIPTOR_WIDTH;

pub fn transform_log1p(x: f64) -> Result<f64, ScenarioError> {
    if x < 0.0 || x.is_nan() {
        return Err(ScenarioError::Domain(x));
    }
    Ok(x.ln_1p())
}

pub fn inverse_log1p(y: f64) -> f64 {
    y.exp_m1()
}

pub fn log1p_slice(xs: &[f64]) -> Result<Vec<f64>, ScenarioError> {
    xs.iter().map(|x| transform_log1p(*x)).collect()
}

pub fn descriptor(policy: &ContactPolicy) -> [f64; DESCRIPTOR_WIDTH] {
    let mut out = [0.0; DESCRIPTOR_WIDTH];
    let days = MAX_CHANGE_POINTS * MATRIX_WIDTH;
    let reductions = days + MAX_CHANGE_POINTS;
    for (m, cp) in policy.change_points().iter().enumerate().take(MAX_CHANGE_POINTS) {
        let matrix = policy.plateau(m);
        for (i, row) in matrix.iter().enumerate() {
            out[m * MATRIX_WIDTH + i * AGE_GROUPS..m * MATRIX_WIDTH + (i + 1) * AGE_GROUPS].copy_from_slice(row);
        }
        out[days + m] = cp.day;
        out[reductions + m] = cp.reduction;
    }
    out
}

fn push_counts(out: &mut Vec<f32>, state: &CompartmentState) -> Result<(), ScenarioError> {
    for x in state.as_slice() {
        out.push(transform_log1p(x.max(0.0))? as f32);
    }
    Ok(())
}

/// `INPUT_DAYS x NONSPATIAL_WIDTH`, row-major.
pub fn encode_nonspatial(inputs: &[CompartmentState], policy: &ContactPolicy) -> Result<Vec<f32>, ScenarioError> {
    if inputs.len() != INPUT_DAYS {
        return Err(ScenarioError::Shape { what: "input days", expected: INPUT_DAYS, found: inputs.len() });
    }
    let desc = descriptor(policy);
    let mut out = Vec::with_capacity(INPUT_DAYS * NONSPATIAL_WIDTH);
    for state in inputs {
        push_counts(&mut out, state)?;
        out.extend(desc.iter().map(|v| *v as f32));
    }
    Ok(out)
}

/// `n x SPATIAL_WIDTH`, row-major; `inputs[node]` holds that node's input days.
pub fn encode_spatial(inputs: &[Vec<CompartmentState>], policy: &ContactPolicy) -> Result<Vec<f32>, ScenarioError> {
    let desc = descriptor(policy);
    let mut out = Vec::with_capacity(inputs.len() * SPATIAL_WIDTH);
    for days in inputs {
        if days.len() != INPUT_DAYS {
            return Err(ScenarioError::Shape { what: "input days", expected: INPUT_DAYS, found: days.len() });
        }
        for state in days {
            push_counts(&mut out, state)?;
        }
        out.extend(desc.iter().map(|v| *v as f32));
    }
    Ok(out)
}

/// Recovers the input-day states of a spatial feature block.
pub fn decode_spatial_counts(features: &[f32], n: usize) -> Result<Vec<Vec<CompartmentState>>, ScenarioError> {
    if features.len() != n * SPATIAL_WIDTH {
        return Err(ScenarioError::Shape { what: "spatial features", expected: n * SPATIAL_WIDTH, found: features.len() });
    }
    Ok(features
        .chunks_exact(SPATIAL_WIDTH)
        .map(|row| {
            row[..INPUT_DAYS * COMPARTMENTS]
                .chunks_exact(COMPARTMENTS)
                .map(|day| {
                    let mut s = CompartmentState::zeros();
                    for (x, y) in s.as_mut_slice().iter_mut().zip(day) {
                        *x = inverse_log1p(*y as f64);
                    }
                    s
                })
                .collect()
        })
        .collect())
}
