//! Procedural scenario generation.
//!
//! Every random draw goes through a [`ChaCha8Rng`] seeded with
//! `ChaCha8Rng::seed_from_u64(config.seed)`. ChaCha8 is a fixed, portable
//! stream cipher, so a given `(config, seed)` yields the same scenario on
//! every platform.

mod presets;
mod sigmoid;

pub use presets::{complex_config, complex_scenario, desk_config, standard_config, standard_scenario};
pub use sigmoid::{reveal_fraction, SigmoidParams};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{
    Fleet, GeoPoint, Hospital, HospitalId, Patient, PatientId, ResourceKind, ResourceVector, RevealParams, Scenario,
    SeverityCode, TravelMatrix, SCHEMA_VERSION,
};
use crate::validate::sigmoid_problem;

pub const MIN_PATIENTS: usize = 10;
pub const MAX_PATIENTS: usize = 500;

/// Last patient is revealed no later than this fraction of the horizon.
const LAST_REVEAL_FRACTION: f64 = 0.9;

/// Ambulance speed used to place hospitals on the map; only cosmetic.
const KM_PER_MINUTE: f64 = 0.6;
const KM_PER_DEGREE: f64 = 111.0;

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("invalid generator config: {field}: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("no feasible scenario after {attempts} attempts from seed {seed}")]
    RetriesExhausted { seed: u64, attempts: u32 },
}

fn config_error(field: &'static str, reason: impl Into<String>) -> GenerateError {
    GenerateError::Config { field, reason: reason.into() }
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub min: u32,
    pub max: u32,
}

impl IntRange {
    pub const fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut impl Rng) -> u32 {
        rng.gen_range(self.min..=self.max)
    }
}

/// Probability of each triage class among generated casualties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityMix {
    pub minor: f64,
    pub severe: f64,
    pub critical: f64,
}

impl SeverityMix {
    fn probabilities(&self) -> [f64; 3] {
        [self.minor, self.severe, self.critical]
    }
}

impl Default for SeverityMix {
    fn default() -> Self {
        Self { minor: 0.5, severe: 0.3, critical: 0.2 }
    }
}

/// Per-kind probability that a patient of a given class needs that resource.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequirementProbabilities {
    pub minor: [f64; 8],
    pub severe: [f64; 8],
    pub critical: [f64; 8],
}

impl RequirementProbabilities {
    fn for_severity(&self, s: SeverityCode) -> &[f64; 8] {
        match s {
            SeverityCode::Critical => &self.critical,
            SeverityCode::Severe => &self.severe,
            _ => &self.minor,
        }
    }
}

impl Default for RequirementProbabilities {
    fn default() -> Self {
        // vent, emergency, icu, or, prbc, burn, peds, obstetrics
        Self {
            minor: [0.0, 0.6, 0.02, 0.05, 0.02, 0.05, 0.08, 0.04],
            severe: [0.15, 0.9, 0.3, 0.4, 0.3, 0.1, 0.08, 0.04],
            critical: [0.5, 1.0, 0.7, 0.6, 0.6, 0.15, 0.08, 0.04],
        }
    }
}

/// Nominal capacity ranges per resource kind, one row per trauma level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityRanges {
    pub level1: [IntRange; 8],
    pub level2: [IntRange; 8],
    pub level3: [IntRange; 8],
}

impl CapacityRanges {
    fn for_level(&self, level: u8) -> &[IntRange; 8] {
        match level {
            1 => &self.level1,
            2 => &self.level2,
            _ => &self.level3,
        }
    }

    fn all(&self) -> impl Iterator<Item = &IntRange> {
        self.level1.iter().chain(&self.level2).chain(&self.level3)
    }
}

impl Default for CapacityRanges {
    fn default() -> Self {
        const fn r(min: u32, max: u32) -> IntRange {
            IntRange::new(min, max)
        }
        Self {
            level1: [r(2, 6), r(6, 12), r(3, 8), r(2, 5), r(4, 10), r(0, 3), r(1, 4), r(1, 3)],
            level2: [r(1, 3), r(4, 8), r(1, 4), r(1, 3), r(2, 6), r(0, 1), r(0, 2), r(0, 2)],
            level3: [r(0, 1), r(2, 5), r(0, 2), r(0, 1), r(0, 3), r(0, 0), r(0, 1), r(0, 1)],
        }
    }
}

/// Survival windows by class. Minor patients have no window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurvivalWindows {
    pub critical: u32,
    pub severe: u32,
}

impl Default for SurvivalWindows {
    fn default() -> Self {
        Self { critical: 60, severe: 240 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub scenario_id: Option<String>,
    pub patient_count: usize,
    pub severity_mix: SeverityMix,
    pub requirement_probabilities: RequirementProbabilities,
    pub survival_windows: SurvivalWindows,
    pub hospital_count: usize,
    /// Probability of levels 1, 2, 3.
    pub level_mix: [f64; 3],
    /// Levels assigned to the first hospitals before sampling from `level_mix`.
    pub fixed_levels: Vec<u8>,
    pub capacity_ranges: CapacityRanges,
    pub travel_time_range: IntRange,
    pub fleet_size_max: u32,
    pub horizon_min: u32,
    /// Explicit reveal schedules; derived from the horizon when absent.
    pub reveal: Option<RevealParams>,
    pub incident_location: GeoPoint,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            scenario_id: None,
            patient_count: 20,
            severity_mix: SeverityMix::default(),
            requirement_probabilities: RequirementProbabilities::default(),
            survival_windows: SurvivalWindows::default(),
            hospital_count: 4,
            level_mix: [0.3, 0.4, 0.3],
            fixed_levels: Vec::new(),
            capacity_ranges: CapacityRanges::default(),
            travel_time_range: IntRange::new(8, 45),
            fleet_size_max: 8,
            horizon_min: 240,
            reveal: None,
            incident_location: GeoPoint { lat: 43.6532, lon: -79.3832 },
            seed: 0,
        }
    }
}

impl RevealParams {
    /// Default schedules scaled to the horizon: patients centred at 20%,
    /// ambulances at 10%, hospital capacity growing from 60% at 30%.
    pub fn defaults_for(horizon_min: u32) -> Self {
        let h = f64::from(horizon_min.max(1));
        let k = 10.0 / h;
        Self {
            patients: SigmoidParams::new(0.2 * h, k, 0.0, 1.0),
            ambulances: SigmoidParams::new(0.1 * h, k, 0.25, 1.0),
            capacity: SigmoidParams::new(0.3 * h, k, 0.6, 1.0),
        }
    }
}

fn check_mix(field: &'static str, probs: &[f64]) -> Result<(), GenerateError> {
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(config_error(field, "probabilities must lie in [0, 1]"));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(config_error(field, format!("probabilities sum to {sum}, expected 1")));
    }
    Ok(())
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GenerateError> {
        if !(MIN_PATIENTS..=MAX_PATIENTS).contains(&self.patient_count) {
            return Err(config_error(
                "patient_count",
                format!("{} outside {MIN_PATIENTS}..={MAX_PATIENTS}", self.patient_count),
            ));
        }
        check_mix("severity_mix", &self.severity_mix.probabilities())?;
        check_mix("level_mix", &self.level_mix)?;
        if self.hospital_count == 0 {
            return Err(config_error("hospital_count", "at least one hospital is required"));
        }
        if self.fixed_levels.len() > self.hospital_count || self.fixed_levels.iter().any(|l| !(1..=3).contains(l)) {
            return Err(config_error("fixed_levels", "levels must be 1..=3 and fit hospital_count"));
        }
        if self.capacity_ranges.all().any(|r| r.min > r.max) {
            return Err(config_error("capacity_ranges", "every range needs min <= max"));
        }
        if self.travel_time_range.min > self.travel_time_range.max {
            return Err(config_error("travel_time_range", "min must not exceed max"));
        }
        let probs = &self.requirement_probabilities;
        if [probs.minor, probs.severe, probs.critical].iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(config_error("requirement_probabilities", "probabilities must lie in [0, 1]"));
        }
        if self.survival_windows.critical == 0 || self.survival_windows.severe == 0 {
            return Err(config_error("survival_windows", "windows must be positive"));
        }
        if self.horizon_min < 10 {
            return Err(config_error("horizon_min", "horizon must be at least 10 minutes"));
        }
        if let Some(reveal) = &self.reveal {
            for p in [&reveal.patients, &reveal.ambulances, &reveal.capacity] {
                if let Some(reason) = sigmoid_problem(p) {
                    return Err(config_error("reveal", reason));
                }
            }
        }
        Ok(())
    }

    pub fn reveal_params(&self) -> RevealParams {
        self.reveal.unwrap_or_else(|| RevealParams::defaults_for(self.horizon_min))
    }
}

/// Reveal minute for each of `count` patients: patient `n` (1-based) appears at
/// the first whole minute where `fraction(t) * count >= n`, capped at 90% of
/// the horizon so the whole roster is visible before it ends.
pub fn reveal_schedule(count: usize, params: &SigmoidParams, horizon_min: u32) -> Vec<u32> {
    let cap = (f64::from(horizon_min) * LAST_REVEAL_FRACTION).floor() as u32;
    let mut times = Vec::with_capacity(count);
    let mut t = 0u32;
    for n in 1..=count {
        while t < cap && reveal_fraction(f64::from(t), params) * (count as f64) < n as f64 {
            t += 1;
        }
        times.push(t);
    }
    times
}

fn pick(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `u` past the last cumulative bound; take the last nonzero bucket.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Builds a scenario from `config`. Pure function of the config (seed included).
pub fn generate_scenario(config: &GeneratorConfig) -> Result<Scenario, GenerateError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let reveal = config.reveal_params();

    let hospitals: Vec<Hospital> = (0..config.hospital_count)
        .map(|j| {
            let level = match config.fixed_levels.get(j) {
                Some(&l) => l,
                None => pick(&mut rng, &config.level_mix) as u8 + 1,
            };
            let mut capacities = ResourceVector::ZERO;
            for (kind, range) in ResourceKind::ALL.iter().zip(config.capacity_ranges.for_level(level)) {
                capacities[*kind] = range.sample(&mut rng);
            }
            Hospital { id: HospitalId(j as u32 + 1), location: config.incident_location, level, capacities }
        })
        .collect();

    // One travel time per hospital: every casualty starts at the incident site.
    let travel_row: Vec<u32> = hospitals.iter().map(|_| config.travel_time_range.sample(&mut rng)).collect();
    let hospitals: Vec<Hospital> = hospitals
        .into_iter()
        .zip(&travel_row)
        .map(|(mut h, &minutes)| {
            let bearing: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let deg = f64::from(minutes) * KM_PER_MINUTE / KM_PER_DEGREE;
            let lat = config.incident_location.lat + deg * bearing.sin();
            let lon_scale = config.incident_location.lat.to_radians().cos().max(0.1);
            let lon = config.incident_location.lon + deg * bearing.cos() / lon_scale;
            h.location = GeoPoint { lat: round6(lat), lon: round6(lon) };
            h
        })
        .collect();

    let reveal_times = reveal_schedule(config.patient_count, &reveal.patients, config.horizon_min);
    let patients: Vec<Patient> = reveal_times
        .iter()
        .enumerate()
        .map(|(i, &reveal_time)| {
            let severity = SeverityCode::LIVE[pick(&mut rng, &config.severity_mix.probabilities())];
            let probs = config.requirement_probabilities.for_severity(severity);
            let mut requirements = ResourceVector::ZERO;
            for (kind, p) in ResourceKind::ALL.iter().zip(probs) {
                if rng.gen_bool(*p) {
                    requirements[*kind] = 1;
                }
            }
            let survival_window = match severity {
                SeverityCode::Critical => Some(config.survival_windows.critical),
                SeverityCode::Severe => Some(config.survival_windows.severe),
                _ => None,
            };
            Patient { id: PatientId(i as u32 + 1), severity, requirements, survival_window, reveal_time }
        })
        .collect();

    let travel_matrix = TravelMatrix(vec![travel_row; patients.len()]);
    let scenario_id = config
        .scenario_id
        .clone()
        .unwrap_or_else(|| format!("gen-p{}-h{}-s{}", config.patient_count, config.hospital_count, config.seed));

    Ok(Scenario {
        schema_version: SCHEMA_VERSION,
        scenario_id,
        incident_location: config.incident_location,
        patients,
        hospitals,
        travel_matrix,
        reveal_params: reveal,
        fleet: Fleet { size_max: config.fleet_size_max },
        horizon_min: config.horizon_min,
        seed: config.seed,
    })
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validate::validate_scenario;

    #[test]
    fn same_seed_is_byte_identical() {
        let cfg = GeneratorConfig { seed: 99, patient_count: 37, ..Default::default() };
        assert_eq!(generate_scenario(&cfg).unwrap().to_json(), generate_scenario(&cfg).unwrap().to_json());
    }

    #[test]
    fn requested_patient_counts() {
        for n in [10, 20, 60, 500] {
            let cfg = GeneratorConfig { patient_count: n, seed: 3, ..Default::default() };
            let s = generate_scenario(&cfg).unwrap();
            assert_eq!(s.patients.len(), n);
            assert_eq!(validate_scenario(&s), vec![]);
        }
    }

    #[test]
    fn rejects_bad_config_by_field() {
        let bad = GeneratorConfig { patient_count: 9, ..Default::default() };
        assert!(matches!(generate_scenario(&bad), Err(GenerateError::Config { field: "patient_count", .. })));
        let bad = GeneratorConfig { patient_count: 501, ..Default::default() };
        assert!(matches!(generate_scenario(&bad), Err(GenerateError::Config { field: "patient_count", .. })));
        let bad = GeneratorConfig {
            severity_mix: SeverityMix { minor: 0.5, severe: 0.5, critical: 0.1 },
            ..Default::default()
        };
        assert!(matches!(generate_scenario(&bad), Err(GenerateError::Config { field: "severity_mix", .. })));
        let bad = GeneratorConfig { travel_time_range: IntRange::new(9, 8), ..Default::default() };
        assert!(matches!(generate_scenario(&bad), Err(GenerateError::Config { field: "travel_time_range", .. })));
        let bad = GeneratorConfig { hospital_count: 0, ..Default::default() };
        assert!(matches!(generate_scenario(&bad), Err(GenerateError::Config { field: "hospital_count", .. })));
    }

    #[test]
    fn reveal_schedule_inverts_the_sigmoid() {
        let params = SigmoidParams::new(48.0, 10.0 / 240.0, 0.0, 1.0);
        let n = 50;
        let times = reveal_schedule(n, &params, 240);
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
        assert!(*times.last().unwrap() <= 216);
        for (i, &t) in times.iter().enumerate() {
            let k = (i + 1) as f64;
            if t < 216 {
                assert!(reveal_fraction(f64::from(t), &params) * n as f64 >= k);
            }
            if t > 0 {
                assert!(reveal_fraction(f64::from(t - 1), &params) * (n as f64) < k);
            }
        }
    }

    #[test]
    fn critical_patients_always_need_emergency() {
        let cfg = GeneratorConfig { patient_count: 500, seed: 11, ..Default::default() };
        let s = generate_scenario(&cfg).unwrap();
        for p in s.patients.iter().filter(|p| p.severity == SeverityCode::Critical) {
            assert_eq!(p.requirements[ResourceKind::Emergency], 1);
            assert_eq!(p.survival_window, Some(60));
        }
        assert!(s.patients.iter().filter(|p| p.severity == SeverityCode::Minor).all(|p| p.survival_window.is_none()));
    }

    #[test]
    fn travel_rows_are_shared() {
        let s = generate_scenario(&GeneratorConfig { seed: 5, ..Default::default() }).unwrap();
        let first = &s.travel_matrix.0[0];
        assert!(s.travel_matrix.0.iter().all(|r| r == first));
        assert!(first.iter().all(|t| (8..=45).contains(t)));
    }
}
