use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use super::params::AGE_GROUPS;

/// Number of infection states per age group.
pub const STATES: usize = 8;

/// Values per region and time: age groups times infection states.
pub const COMPARTMENTS: usize = AGE_GROUPS * STATES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfectionState {
    Susceptible,
    Exposed,
    InfectedNoSymptoms,
    InfectedSymptoms,
    InfectedSevere,
    InfectedCritical,
    Recovered,
    Dead,
}

impl InfectionState {
    pub const ALL: [InfectionState; STATES] = [
        InfectionState::Susceptible,
        InfectionState::Exposed,
        InfectionState::InfectedNoSymptoms,
        InfectionState::InfectedSymptoms,
        InfectionState::InfectedSevere,
        InfectionState::InfectedCritical,
        InfectionState::Recovered,
        InfectionState::Dead,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn short_name(self) -> &'static str {
        match self {
            InfectionState::Susceptible => "S",
            InfectionState::Exposed => "E",
            InfectionState::InfectedNoSymptoms => "I_NS",
            InfectionState::InfectedSymptoms => "I_Sy",
            InfectionState::InfectedSevere => "I_Sev",
            InfectionState::InfectedCritical => "I_Cr",
            InfectionState::Recovered => "R",
            InfectionState::Dead => "D",
        }
    }

    /// Whether persons in this state take part in commuting.
    pub fn is_mobile(self) -> bool {
        !matches!(
            self,
            InfectionState::InfectedSevere | InfectionState::InfectedCritical | InfectionState::Dead
        )
    }
}

impl fmt::Display for InfectionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[inline]
pub const fn flat_index(age: usize, state: InfectionState) -> usize {
    age * STATES + state as usize
}

/// Person counts of one region, laid out age-major (`age * 8 + state`).
#[derive(Clone, Copy, PartialEq)]
pub struct CompartmentState {
    values: [f64; COMPARTMENTS],
}

impl CompartmentState {
    pub fn zeros() -> Self {
        Self { values: [0.0; COMPARTMENTS] }
    }

    pub fn from_slice(values: &[f64]) -> Option<Self> {
        let values: [f64; COMPARTMENTS] = values.try_into().ok()?;
        Some(Self { values })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn age(&self, age: usize) -> &[f64] {
        &self.values[age * STATES..(age + 1) * STATES]
    }

    pub fn age_total(&self, age: usize) -> f64 {
        self.age(age).iter().sum()
    }

    pub fn age_totals(&self) -> [f64; AGE_GROUPS] {
        std::array::from_fn(|a| self.age_total(a))
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Sum of one state over all age groups.
    pub fn state_total(&self, state: InfectionState) -> f64 {
        (0..AGE_GROUPS).map(|a| self[(a, state)]).sum()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl Default for CompartmentState {
    fn default() -> Self {
        Self::zeros()
    }
}

impl Index<(usize, InfectionState)> for CompartmentState {
    type Output = f64;
    fn index(&self, (age, state): (usize, InfectionState)) -> &f64 {
        &self.values[flat_index(age, state)]
    }
}

impl IndexMut<(usize, InfectionState)> for CompartmentState {
    fn index_mut(&mut self, (age, state): (usize, InfectionState)) -> &mut f64 {
        &mut self.values[flat_index(age, state)]
    }
}

impl fmt::Debug for CompartmentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..AGE_GROUPS).map(|a| self.age(a)).collect();
        f.debug_struct("CompartmentState").field("by_age", &rows).finish()
    }
}

// Serialized as six rows of eight values, one row per age group.
impl Serialize for CompartmentState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<[f64; STATES]> = (0..AGE_GROUPS)
            .map(|a| self.age(a).try_into().expect("row width"))
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CompartmentState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<[f64; STATES]>::deserialize(deserializer)?;
        if rows.len() != AGE_GROUPS {
            return Err(serde::de::Error::invalid_length(rows.len(), &"6 age groups"));
        }
        let mut state = CompartmentState::zeros();
        for (a, row) in rows.iter().enumerate() {
            state.values[a * STATES..(a + 1) * STATES].copy_from_slice(row);
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_age_major() {
        assert_eq!(flat_index(0, InfectionState::Susceptible), 0);
        assert_eq!(flat_index(0, InfectionState::Dead), 7);
        assert_eq!(flat_index(1, InfectionState::Susceptible), 8);
        assert_eq!(flat_index(5, InfectionState::Dead), 47);
    }

    #[test]
    fn json_shape_is_six_by_eight() {
        let mut s = CompartmentState::zeros();
        s[(2, InfectionState::Exposed)] = 4.5;
        let json = serde_json::to_value(s).unwrap();
        assert_eq!(json.as_array().unwrap().len(), 6);
        assert_eq!(json[2][1], 4.5);
        let back: CompartmentState = serde_json::from_value(json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<CompartmentState>("[[0,0,0,0,0,0,0,0]]").is_err());
    }

    #[test]
    fn severe_critical_dead_do_not_travel() {
        let immobile: Vec<_> = InfectionState::ALL.iter().filter(|s| !s.is_mobile()).collect();
        assert_eq!(
            immobile,
            [&InfectionState::InfectedSevere, &InfectionState::InfectedCritical, &InfectionState::Dead]
        );
    }
}
