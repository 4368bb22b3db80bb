//! Domain types shared by the generator, engine, reward model, and policies.
//!
//! All durations are simulated minutes. Resource vectors are always indexed in
//! the canonical [`ResourceKind::ALL`] order, which is also the order used in
//! the scenario file and in observation encodings.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::generate::SigmoidParams;

/// Current scenario file schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Triage severity code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeverityCode {
    Deceased = 0,
    Minor = 1,
    Severe = 2,
    Critical = 3,
}

impl SeverityCode {
    pub const LIVE: [SeverityCode; 3] = [SeverityCode::Minor, SeverityCode::Severe, SeverityCode::Critical];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Deceased),
            1 => Some(Self::Minor),
            2 => Some(Self::Severe),
            3 => Some(Self::Critical),
            _ => None,
        }
    }

    /// Whether a patient of this severity can die while waiting.
    pub fn is_time_critical(self) -> bool {
        matches!(self, Self::Severe | Self::Critical)
    }

    /// Display color used by notifications and patient cards.
    pub fn color(self) -> SeverityColor {
        match self {
            Self::Critical => SeverityColor::Red,
            Self::Severe => SeverityColor::Yellow,
            Self::Minor => SeverityColor::Green,
            Self::Deceased => SeverityColor::Gray,
        }
    }
}

impl fmt::Display for SeverityCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Deceased => "deceased",
            Self::Minor => "minor",
            Self::Severe => "severe",
            Self::Critical => "critical",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeverityColor {
    Red,
    Yellow,
    Green,
    Gray,
}

/// The eight medical resource kinds, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    Ventilator = 0,
    Emergency = 1,
    Icu = 2,
    OperatingRoom = 3,
    Prbc = 4,
    BurnCenter = 5,
    Pediatrics = 6,
    Obstetrics = 7,
}

impl ResourceKind {
    pub const COUNT: usize = 8;

    pub const ALL: [ResourceKind; 8] = [
        ResourceKind::Ventilator,
        ResourceKind::Emergency,
        ResourceKind::Icu,
        ResourceKind::OperatingRoom,
        ResourceKind::Prbc,
        ResourceKind::BurnCenter,
        ResourceKind::Pediatrics,
        ResourceKind::Obstetrics,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ventilator => "ventilator",
            Self::Emergency => "emergency",
            Self::Icu => "icu",
            Self::OperatingRoom => "operating_room",
            Self::Prbc => "prbc",
            Self::BurnCenter => "burn_center",
            Self::Pediatrics => "pediatrics",
            Self::Obstetrics => "obstetrics",
        }
    }
}

/// Per-kind counts. Serialized as a plain 8-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceVector(pub [u32; ResourceKind::COUNT]);

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector([0; ResourceKind::COUNT]);

    pub fn new(counts: [u32; ResourceKind::COUNT]) -> Self {
        Self(counts)
    }

    /// A binary vector with exactly the given kinds set.
    pub fn from_kinds(kinds: &[ResourceKind]) -> Self {
        let mut v = Self::ZERO;
        for &k in kinds {
            v[k] = 1;
        }
        v
    }

    pub fn is_binary(&self) -> bool {
        self.0.iter().all(|&c| c <= 1)
    }

    /// Number of nonzero entries (`Q_i` for a requirement vector).
    pub fn count_nonzero(&self) -> u32 {
        self.0.iter().filter(|&&c| c > 0).count() as u32
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn kinds(&self) -> impl Iterator<Item = ResourceKind> + '_ {
        ResourceKind::ALL.into_iter().filter(move |k| self[*k] > 0)
    }

    pub fn saturating_sub(&self, other: &ResourceVector) -> ResourceVector {
        let mut out = *self;
        for (o, r) in out.0.iter_mut().zip(other.0) {
            *o = o.saturating_sub(r);
        }
        out
    }

    pub fn add(&self, other: &ResourceVector) -> ResourceVector {
        let mut out = *self;
        for (o, r) in out.0.iter_mut().zip(other.0) {
            *o += r;
        }
        out
    }

    /// Component-wise `self <= other`.
    pub fn fits_within(&self, other: &ResourceVector) -> bool {
        self.0.iter().zip(other.0).all(|(a, b)| *a <= b)
    }
}

impl Index<ResourceKind> for ResourceVector {
    type Output = u32;
    fn index(&self, kind: ResourceKind) -> &u32 {
        &self.0[kind.index()]
    }
}

impl IndexMut<ResourceKind> for ResourceVector {
    fn index_mut(&mut self, kind: ResourceKind) -> &mut u32 {
        &mut self.0[kind.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatientId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HospitalId(pub u32);

impl fmt::Display for PatientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

impl fmt::Display for HospitalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H{}", self.0)
    }
}

/// Latitude/longitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// Maximum survival time without hospital care. `None` means unbounded.
pub type SurvivalWindow = Option<u32>;

/// Static facts about a casualty. Runtime status lives in the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub id: PatientId,
    pub severity: SeverityCode,
    pub requirements: ResourceVector,
    /// Minutes; absent for patients who cannot die in-simulation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survival_window: SurvivalWindow,
    pub reveal_time: u32,
}

impl Patient {
    /// `Q_i`: number of required resource kinds.
    pub fn required_count(&self) -> u32 {
        self.requirements.count_nonzero()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hospital {
    pub id: HospitalId,
    pub location: GeoPoint,
    /// Trauma level; 1 is the most capable.
    pub level: u8,
    pub capacities: ResourceVector,
}

/// Travel durations in minutes, one row per patient and one column per hospital.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TravelMatrix(pub Vec<Vec<u32>>);

impl TravelMatrix {
    pub fn get(&self, patient_idx: usize, hospital_idx: usize) -> Option<u32> {
        self.0.get(patient_idx).and_then(|row| row.get(hospital_idx)).copied()
    }

    pub fn rows(&self) -> usize {
        self.0.len()
    }
}

/// Logistic schedules for the three things that ramp up after the incident.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevealParams {
    pub patients: SigmoidParams,
    pub ambulances: SigmoidParams,
    pub capacity: SigmoidParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fleet {
    pub size_max: u32,
}

/// A complete incident: rosters, travel matrix, and reveal schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub scenario_id: String,
    pub incident_location: GeoPoint,
    pub patients: Vec<Patient>,
    pub hospitals: Vec<Hospital>,
    pub travel_matrix: TravelMatrix,
    pub reveal_params: RevealParams,
    pub fleet: Fleet,
    pub horizon_min: u32,
    pub seed: u64,
}

impl Scenario {
    pub fn patient_index(&self, id: PatientId) -> Option<usize> {
        self.patients.iter().position(|p| p.id == id)
    }

    pub fn hospital_index(&self, id: HospitalId) -> Option<usize> {
        self.hospitals.iter().position(|h| h.id == id)
    }

    pub fn travel(&self, patient_idx: usize, hospital_idx: usize) -> u32 {
        self.travel_matrix.0[patient_idx][hospital_idx]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
