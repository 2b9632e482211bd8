//! Random initial conditions and contact change points.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::epi::params::AGE_GROUPS;
use crate::epi::state::{CompartmentState, InfectionState};
use crate::epi::ContactChangePoint;
use crate::metapop::NodePopulation;

use InfectionState::*;

/// Bands of the outbreak regime, in persons per 100 000.
pub const OUTBREAK_SYMPTOMS_BAND: (f64, f64) = (7.0, 100.0);
pub const OUTBREAK_EXPOSED_BAND: (f64, f64) = (25.0, 500.0);
pub const OUTBREAK_NO_SYMPTOMS_BAND: (f64, f64) = (7.0, 100.0);

/// Bands of the persistent-threat regime, as population shares.
pub const PERSISTENT_SYMPTOMS_BAND: (f64, f64) = (0.0001, 0.05);
pub const PERSISTENT_EXPOSED_BAND: (f64, f64) = (0.0001, 0.225);
pub const PERSISTENT_NO_SYMPTOMS_BAND: (f64, f64) = (0.0001, 0.225);
/// Joint cap on the infected share in the persistent-threat regime.
pub const PERSISTENT_INFECTED_CAP: f64 = 0.5;

/// Days on which contact changes may start, `1..=CHANGE_WINDOW`.
pub const CHANGE_WINDOW: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Outbreak,
    PersistentThreat,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Outbreak => "outbreak",
            Regime::PersistentThreat => "persistent_threat",
        })
    }
}

impl std::str::FromStr for Regime {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, ScenarioError> {
        match s {
            "outbreak" => Ok(Regime::Outbreak),
            "persistent_threat" | "persistent-threat" | "persistent" => Ok(Regime::PersistentThreat),
            other => Err(ScenarioError::InvalidConfig(format!("unknown regime {other:?}"))),
        }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + rng.random::<f64>() * (hi - lo)
}

/// Outbreak draws in persons per 100 000.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutbreakDraw {
    pub exposed: f64,
    pub no_symptoms: f64,
    pub symptoms: f64,
}

impl OutbreakDraw {
    pub fn sample(rng: &mut impl Rng) -> Self {
        let symptoms = uniform(rng, OUTBREAK_SYMPTOMS_BAND);
        let exposed = uniform(rng, OUTBREAK_EXPOSED_BAND);
        let no_symptoms = uniform(rng, OUTBREAK_NO_SYMPTOMS_BAND);
        Self { exposed, no_symptoms, symptoms }
    }

    pub fn state(&self, node: &NodePopulation) -> Result<CompartmentState, ScenarioError> {
        let scale = node.population / 100_000.0;
        allocate(
            node,
            [
                (Exposed, self.exposed * scale),
                (InfectedNoSymptoms, self.no_symptoms * scale),
                (InfectedSymptoms, self.symptoms * scale),
            ],
        )
    }
}

/// Persistent-threat draws as population shares. `recovered_fraction` places
/// the recovered share inside the feasible interval `[0, 1 - infected]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistentDraw {
    pub exposed: f64,
    pub no_symptoms: f64,
    pub symptoms: f64,
    pub recovered_fraction: f64,
}

impl PersistentDraw {
    pub fn sample(rng: &mut impl Rng) -> Self {
        let symptoms = uniform(rng, PERSISTENT_SYMPTOMS_BAND);
        let exposed = uniform(rng, PERSISTENT_EXPOSED_BAND);
        let no_symptoms = uniform(rng, PERSISTENT_NO_SYMPTOMS_BAND);
        let recovered_fraction = rng.random::<f64>();
        Self { exposed, no_symptoms, symptoms, recovered_fraction }
    }

    /// Shares `(exposed, no_symptoms, symptoms, recovered)` after applying the
    /// joint infected cap.
    pub fn shares(&self) -> [f64; 4] {
        let sum = self.exposed + self.no_symptoms + self.symptoms;
        let k = if sum > PERSISTENT_INFECTED_CAP { PERSISTENT_INFECTED_CAP / sum } else { 1.0 };
        let (e, ns, sy) = (self.exposed * k, self.no_symptoms * k, self.symptoms * k);
        let infected = e + ns + sy;
        [e, ns, sy, self.recovered_fraction * (1.0 - infected)]
    }

    pub fn state(&self, node: &NodePopulation) -> Result<CompartmentState, ScenarioError> {
        let [e, ns, sy, r] = self.shares();
        let n = node.population;
        allocate(node, [(Exposed, e * n), (InfectedNoSymptoms, ns * n), (InfectedSymptoms, sy * n), (Recovered, r * n)])
    }
}

// Splits node-level counts across age groups by population share and fills
// the remainder with susceptibles.
fn allocate<const K: usize>(
    node: &NodePopulation,
    counts: [(InfectionState, f64); K],
) -> Result<CompartmentState, ScenarioError> {
    let mut s = CompartmentState::zeros();
    for a in 0..AGE_GROUPS {
        let size = node.population * node.age_shares[a];
        let mut used = 0.0;
        for (state, total) in counts {
            let v = total * node.age_shares[a];
            s[(a, state)] = v;
            used += v;
        }
        let rest = size - used;
        if rest < -1e-9 * size.max(1.0) {
            return Err(ScenarioError::InfeasibleAllocation { age: a, excess: -rest });
        }
        s[(a, Susceptible)] = rest.max(0.0);
    }
    Ok(s)
}

pub fn sample_outbreak_init(rng: &mut impl Rng, node: &NodePopulation) -> Result<CompartmentState, ScenarioError> {
    OutbreakDraw::sample(rng).state(node)
}

pub fn sample_persistent_init(rng: &mut impl Rng, node: &NodePopulation) -> Result<CompartmentState, ScenarioError> {
    PersistentDraw::sample(rng).state(node)
}

pub fn sample_init(rng: &mut impl Rng, regime: Regime, node: &NodePopulation) -> Result<CompartmentState, ScenarioError> {
    match regime {
        Regime::Outbreak => sample_outbreak_init(rng, node),
        Regime::PersistentThreat => sample_persistent_init(rng, node),
    }
}

/// `count` change points on distinct days in `1..=window`, sorted, each with
/// a reduction drawn from `[0, 1)`.
pub fn sample_change_points_exact(rng: &mut impl Rng, count: usize, window: u32) -> Vec<ContactChangePoint> {
    let mut days = index::sample(rng, window as usize, count).into_vec();
    days.sort_unstable();
    days.into_iter().map(|d| ContactChangePoint::new((d + 1) as f64, rng.random::<f64>())).collect()
}

/// Draws the number of change points uniformly from `0..=max_changes`, then
/// the change points themselves.
pub fn sample_change_points(rng: &mut impl Rng, max_changes: usize, window: u32) -> Vec<ContactChangePoint> {
    let count = rng.random_range(0..=max_changes);
    sample_change_points_exact(rng, count, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn node(population: f64) -> NodePopulation {
        NodePopulation::new(population)
    }

    #[test]
    fn outbreak_band_minima() {
        let draw = OutbreakDraw { exposed: 25.0, no_symptoms: 7.0, symptoms: 7.0 };
        let s = draw.state(&node(100_000.0)).unwrap();
        assert!((s.state_total(InfectedSymptoms) - 7.0).abs() < 1e-9);
        assert!((s.state_total(Exposed) - 25.0).abs() < 1e-9);
        assert!((s.total() - 100_000.0).abs() < 1e-6);
        let double = draw.state(&node(200_000.0)).unwrap();
        assert!((double.state_total(Exposed) - 50.0).abs() < 1e-9);
        for st in [InfectedSevere, InfectedCritical, Dead, Recovered] {
            assert_eq!(s.state_total(st), 0.0);
        }
    }

    #[test]
    fn persistent_cap_boundary() {
        let draw = PersistentDraw { exposed: 0.225, no_symptoms: 0.225, symptoms: 0.05, recovered_fraction: 0.3 };
        let [e, ns, sy, _] = draw.shares();
        assert!((e + ns + sy - 0.5).abs() < 1e-15);
        let s = draw.state(&node(1000.0)).unwrap();
        let rest = s.state_total(Susceptible) + s.state_total(Recovered);
        assert!((rest - 500.0).abs() < 1e-9);
    }

    #[test]
    fn persistent_rescales_above_cap() {
        let draw = PersistentDraw { exposed: 0.3, no_symptoms: 0.3, symptoms: 0.4, recovered_fraction: 0.0 };
        let [e, ns, sy, r] = draw.shares();
        assert!((e + ns + sy - 0.5).abs() < 1e-15);
        assert!((e / sy - 0.75).abs() < 1e-12);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn persistent_full_recovered_leaves_no_susceptibles() {
        let draw = PersistentDraw { exposed: 0.1, no_symptoms: 0.05, symptoms: 0.02, recovered_fraction: 1.0 };
        let s = draw.state(&node(50_000.0)).unwrap();
        assert!(s.state_total(Susceptible).abs() < 1e-9);
    }

    #[test]
    fn persistent_draws_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = node(123_456.0);
        for _ in 0..10_000 {
            let draw = PersistentDraw::sample(&mut rng);
            let shares = draw.shares();
            let s_share = 1.0 - shares.iter().sum::<f64>();
            assert!(s_share >= -1e-15);
            assert!((shares.iter().sum::<f64>() + s_share - 1.0).abs() < 1e-12);
            let s = draw.state(&n).unwrap();
            assert!(s.min_value() >= 0.0);
            assert!(((s.total() - n.population) / n.population).abs() < 1e-12);
        }
    }

    #[test]
    fn change_points_are_sorted_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let cps = sample_change_points(&mut rng, 3, CHANGE_WINDOW);
            assert!(cps.len() <= 3);
            assert!(cps.windows(2).all(|w| w[0].day < w[1].day));
            assert!(cps.iter().all(|c| (1.0..=30.0).contains(&c.day) && (0.0..1.0).contains(&c.reduction)));
        }
        assert!(sample_change_points(&mut rng, 0, CHANGE_WINDOW).is_empty());
        assert_eq!(sample_change_points_exact(&mut rng, 3, CHANGE_WINDOW).len(), 3);
    }

    #[test]
    fn regime_names() {
        assert_eq!("persistent_threat".parse::<Regime>().unwrap(), Regime::PersistentThreat);
        assert_eq!(Regime::Outbreak.to_string(), "outbreak");
        assert!("other".parse::<Regime>().is_err());
        assert_eq!(serde_json::to_string(&Regime::PersistentThreat).unwrap(), "\"persistent_threat\"");
    }
}
