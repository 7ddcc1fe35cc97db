//! Patient demographics and the FMA-derived impairment label.

use serde::{Deserialize, Serialize};
use std::fmt;

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

/// Three-way motor impairment class. The discriminant doubles as the
/// classifier output index, so `Mild < Moderate < Severe` is also the
/// tie-break order used by prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ImpairmentLevel {
    Mild = 0,
    Moderate = 1,
    Severe = 2,
}

impl ImpairmentLevel {
    pub const ALL: [ImpairmentLevel; 3] = [Self::Mild, Self::Moderate, Self::Severe];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for ImpairmentLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Mild => "mild",
            Self::Moderate => "moderate",
            Self::Severe => "severe",
        };
        f.write_str(s)
    }
}

/// Mild iff fma >= 85, Moderate iff 50 <= fma < 85, Severe below 50.
pub fn level_from_fma(fma: i32) -> Result<ImpairmentLevel, SimError> {
    match fma {
        85..=100 => Ok(ImpairmentLevel::Mild),
        50..=84 => Ok(ImpairmentLevel::Moderate),
        0..=49 => Ok(ImpairmentLevel::Severe),
        _ => Err(SimError::Domain(format!("FMA score {fma} outside 0..=100"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub id: String,
    pub age: u32,
    pub sex: Sex,
    pub bmi: f64,
    pub fma_score: i32,
    pub symptoms: String,
}

impl PatientProfile {
    pub fn new(
        id: impl Into<String>,
        age: u32,
        sex: Sex,
        bmi: f64,
        fma_score: i32,
        symptoms: impl Into<String>,
    ) -> Result<Self, SimError> {
        let p = Self {
            id: id.into(),
            age,
            sex,
            bmi,
            fma_score,
            symptoms: symptoms.into(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.age == 0 {
            return Err(SimError::Domain(format!("patient {}: age must be > 0", self.id)));
        }
        if !(self.bmi > 0.0) {
            return Err(SimError::Domain(format!("patient {}: bmi must be > 0", self.id)));
        }
        level_from_fma(self.fma_score).map(|_| ())
    }

    pub fn level(&self) -> ImpairmentLevel {
        // validated at construction
        level_from_fma(self.fma_score).unwrap_or(ImpairmentLevel::Severe)
    }

    /// Side named in the free-text symptoms, if any.
    pub fn symptom_side(&self) -> Option<super::gait::Foot> {
        let s = self.symptoms.to_lowercase();
        match (s.contains("left"), s.contains("right")) {
            (true, false) => Some(super::gait::Foot::Left),
            (false, true) => Some(super::gait::Foot::Right),
            _ => None,
        }
    }
}

/// The 20-patient reference cohort (demographics as published for the
/// original study). Used to parameterize synthetic cohorts.
pub fn reference_cohort() -> Vec<PatientProfile> {
    use Sex::*;
    let rows: [(u32, Sex, f64, i32, &str); 20] = [
        (68, Male, 22.1, 91, "Minor left-sided hemiparesis"),
        (45, Male, 23.6, 93, "Difficulty with fine motor skills"),
        (56, Male, 29.2, 90, "Mild gait instability"),
        (53, Female, 22.6, 88, "Occasional imbalance while walking"),
        (51, Female, 24.3, 87, "Left knee valgus during gait"),
        (45, Male, 35.0, 91, "Subtle hand tremors"),
        (31, Female, 20.4, 90, "Slightly asymmetric gait"),
        (32, Male, 25.2, 59, "Moderate left-sided weakness"),
        (52, Male, 24.5, 75, "Gait asymmetry with compensatory mechanisms"),
        (69, Male, 21.6, 78, "Moderate foot inversion on the right"),
        (49, Male, 24.5, 71, "Difficulty with midline balance"),
        (61, Male, 19.8, 51, "Notable knee hyperextension on standing"),
        (56, Female, 21.7, 66, "Partial hand movement loss"),
        (38, Female, 20.7, 63, "Frequent toe dragging while walking"),
        (58, Male, 23.4, 31, "Severe left-sided hemiplegia"),
        (39, Male, 22.9, 38, "Foot drop requiring ankle support"),
        (36, Male, 25.6, 41, "Loss of balance with need for assistance"),
        (68, Male, 23.7, 38, "Prolonged stance phase on unaffected side"),
        (63, Female, 21.8, 36, "Severe spasticity in right arm and leg"),
        (56, Male, 26.1, 30, "Complete paralysis of left side"),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, &(age, sex, bmi, fma, sym))| PatientProfile {
            id: format!("P{:02}", i + 1),
            age,
            sex,
            bmi,
            fma_score: fma,
            symptoms: sym.to_string(),
        })
        .collect()
}
