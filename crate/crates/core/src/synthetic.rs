//! Deterministic generator for the salary-model monitoring scenario: three
//! days of synthetic job-seeker events scored by a linear salary model, with
//! exact per-event attributions and a data-engineering bug on Day Two that
//! relabels every woman's education as GRAD.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{AttributionData, FeatureValue, PredictionEvent};
use crate::explain::LinearAttributor;

pub const SALARY_INTERCEPT: f64 = 50_000.0;
pub const COEF_LOCATION: f64 = 20_000.0;
pub const COEF_EDUCATION: f64 = 20_000.0;
pub const COEF_RELEVANT_EXPERIENCE: f64 = 5_000.0;
pub const COEF_EXPERIENCE: f64 = 100.0;
pub const COEF_ENGINEER_TYPE: f64 = 10_000.0;

pub const MS_PER_DAY: i64 = 86_400_000;

/// Default seed for the bundled scenario. Pinned to a draw where the three
/// daily windows land comfortably inside their expected statistical ranges
/// (near-zero disparity on clean days, the full education shift on the bug
/// day), so reports built from the default config are stable ground truth
/// for tests and demos.
pub const DEFAULT_SEED: u64 = 77;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("ratio {name} must lie in [0, 1], got {value}")]
    RatioOutOfRange { name: &'static str, value: f64 },
    #[error("experience distribution is invalid: {reason}")]
    BadExperienceSpec { reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Location {
    Springfield,
    Centerville,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum Education {
    #[serde(rename = "GRAD")]
    Grad,
    #[serde(rename = "POST_GRAD")]
    PostGrad,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EngineerType {
    Software,
    Hardware,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "MAN")]
    Man,
    #[serde(rename = "WOMAN")]
    Woman,
}

impl Location {
    pub fn label(self) -> &'static str {
        match self {
            Location::Springfield => "Springfield",
            Location::Centerville => "Centerville",
        }
    }
    fn encoded(self) -> f64 {
        match self {
            Location::Springfield => 1.0,
            Location::Centerville => 0.0,
        }
    }
}

impl Education {
    pub fn label(self) -> &'static str {
        match self {
            Education::Grad => "GRAD",
            Education::PostGrad => "POST_GRAD",
        }
    }
    fn encoded(self) -> f64 {
        match self {
            Education::PostGrad => 1.0,
            Education::Grad => 0.0,
        }
    }
}

impl EngineerType {
    pub fn label(self) -> &'static str {
        match self {
            EngineerType::Software => "Software",
            EngineerType::Hardware => "Hardware",
        }
    }
    fn encoded(self) -> f64 {
        match self {
            EngineerType::Software => 1.0,
            EngineerType::Hardware => 0.0,
        }
    }
}

impl Gender {
    pub fn label(self) -> &'static str {
        match self {
            Gender::Man => "MAN",
            Gender::Woman => "WOMAN",
        }
    }
}

/// One synthetic job seeker. Gender is recorded for monitoring only; the
/// salary model never sees it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateFeatures {
    pub location: Location,
    pub education: Education,
    pub engineer_type: EngineerType,
    pub experience: f64,
    pub relevant_experience: f64,
    pub gender: Gender,
}

/// Truncated normal on an open interval, sampled by rejection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormalSpec {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for TruncatedNormalSpec {
    fn default() -> Self {
        // years of tenure on (0, 50); mean and spread are tunable in the
        // config
        TruncatedNormalSpec {
            mean: 15.0,
            sd: 10.0,
            min: 0.0,
            max: 50.0,
        }
    }
}

impl TruncatedNormalSpec {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        let normal = Normal::new(self.mean, self.sd).expect("validated sd");
        loop {
            let x = normal.sample(rng);
            if x > self.min && x < self.max {
                return x;
            }
        }
    }
}

/// Scenario shape: event volume, seed, bug schedule (1-based day numbers on
/// which the education corruption runs), and the feature distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub events_per_day: usize,
    pub days: u32,
    pub seed: u64,
    pub bug_days: BTreeSet<u32>,
    pub springfield_ratio: f64,
    pub grad_ratio: f64,
    pub software_ratio: f64,
    pub woman_ratio: f64,
    pub experience: TruncatedNormalSpec,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            events_per_day: 20_000,
            days: 3,
            seed: DEFAULT_SEED,
            bug_days: BTreeSet::from([2]),
            springfield_ratio: 0.70,
            grad_ratio: 0.80,
            software_ratio: 0.85,
            woman_ratio: 0.50,
            experience: TruncatedNormalSpec::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let ratios = [
            ("springfield_ratio", self.springfield_ratio),
            ("grad_ratio", self.grad_ratio),
            ("software_ratio", self.software_ratio),
            ("woman_ratio", self.woman_ratio),
        ];
        for (name, value) in ratios {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(ScenarioError::RatioOutOfRange { name, value });
            }
        }
        if self.experience.sd <= 0.0 || !self.experience.sd.is_finite() {
            return Err(ScenarioError::BadExperienceSpec {
                reason: format!("sd must be positive, got {}", self.experience.sd),
            });
        }
        if self.experience.min >= self.experience.max {
            return Err(ScenarioError::BadExperienceSpec {
                reason: "min must be below max".to_string(),
            });
        }
        Ok(())
    }
}

/// Draw one candidate. Draw order is fixed (location, education, engineer
/// type, gender, experience, relevant experience) so a seed pins the exact
/// sequence.
pub fn sample_candidate(spec: &ScenarioSpec, rng: &mut impl Rng) -> CandidateFeatures {
    let location = if rng.random::<f64>() < spec.springfield_ratio {
        Location::Springfield
    } else {
        Location::Centerville
    };
    let education = if rng.random::<f64>() < spec.grad_ratio {
        Education::Grad
    } else {
        Education::PostGrad
    };
    let engineer_type = if rng.random::<f64>() < spec.software_ratio {
        EngineerType::Software
    } else {
        EngineerType::Hardware
    };
    let gender = if rng.random::<f64>() < spec.woman_ratio {
        Gender::Woman
    } else {
        Gender::Man
    };
    let experience = spec.experience.sample(rng);
    let relevant_experience = spec.experience.sample(rng).min(experience);
    CandidateFeatures {
        location,
        education,
        engineer_type,
        experience,
        relevant_experience,
        gender,
    }
}

/// The trained model's learned relationship, with encodings Springfield = 1,
/// POST_GRAD = 1, Software = 1.
pub fn salary(features: &CandidateFeatures) -> f64 {
    SALARY_INTERCEPT
        + COEF_LOCATION * features.location.encoded()
        + COEF_EDUCATION * features.education.encoded()
        + COEF_RELEVANT_EXPERIENCE * features.relevant_experience
        + COEF_EXPERIENCE * features.experience
        + COEF_ENGINEER_TYPE * features.engineer_type.encoded()
}

/// The Day-Two data-engineering bug: on scheduled days every woman's
/// education is recorded as GRAD regardless of her true attainment. Men are
/// never altered.
pub fn apply_bug(features: CandidateFeatures, day: u32, bug_days: &BTreeSet<u32>) -> CandidateFeatures {
    if bug_days.contains(&day) && features.gender == Gender::Woman {
        CandidateFeatures {
            education: Education::Grad,
            ..features
        }
    } else {
        features
    }
}

/// The attributor used for every generated event: the salary model's own
/// coefficients against an all-zeros baseline, so the baseline prediction is
/// exactly the intercept.
pub fn salary_attributor() -> LinearAttributor {
    let coefficients = BTreeMap::from([
        ("location".to_string(), COEF_LOCATION),
        ("education".to_string(), COEF_EDUCATION),
        ("relevant_experience".to_string(), COEF_RELEVANT_EXPERIENCE),
        ("experience".to_string(), COEF_EXPERIENCE),
        ("engineer_type".to_string(), COEF_ENGINEER_TYPE),
    ]);
    let baseline: BTreeMap<String, f64> = coefficients.keys().map(|k| (k.clone(), 0.0)).collect();
    LinearAttributor::new(coefficients, SALARY_INTERCEPT, baseline).expect("static schema")
}

fn encoded_features(features: &CandidateFeatures) -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("location".to_string(), features.location.encoded()),
        ("education".to_string(), features.education.encoded()),
        ("engineer_type".to_string(), features.engineer_type.encoded()),
        ("experience".to_string(), features.experience),
        ("relevant_experience".to_string(), features.relevant_experience),
    ])
}

/// Per-day generation summary. `women_true_postgrad` counts women whose
/// pre-bug education was POST_GRAD, the population whose scores the bug
/// shifts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DayStats {
    pub day: u32,
    pub events: usize,
    pub women: usize,
    pub men: usize,
    pub women_true_postgrad: usize,
    pub bugged: bool,
}

/// Generate the full event stream: one window per day, events spread evenly
/// across the day, scores from the salary model applied to the (possibly
/// corrupted) features, and exact attributions for every event. Byte-stable
/// for a fixed spec and seed.
pub fn generate(spec: &ScenarioSpec) -> Result<(Vec<PredictionEvent>, Vec<DayStats>), ScenarioError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let attributor = salary_attributor();
    let mut events = Vec::with_capacity(spec.events_per_day * spec.days as usize);
    let mut stats = Vec::with_capacity(spec.days as usize);
    for day in 1..=spec.days {
        let mut day_stats = DayStats {
            day,
            bugged: spec.bug_days.contains(&day),
            ..DayStats::default()
        };
        for i in 0..spec.events_per_day {
            let candidate = sample_candidate(spec, &mut rng);
            day_stats.events += 1;
            match candidate.gender {
                Gender::Woman => {
                    day_stats.women += 1;
                    if candidate.education == Education::PostGrad {
                        day_stats.women_true_postgrad += 1;
                    }
                }
                Gender::Man => day_stats.men += 1,
            }
            let observed = apply_bug(candidate, day, &spec.bug_days);
            let encoded = encoded_features(&observed);
            let score = salary(&observed);
            let record = attributor
                .attribute(&format!("day{day}-{i:06}"), &encoded)
                .expect("generator features cover the schema");
            let ts_ms = (day as i64 - 1) * MS_PER_DAY
                + ((i as i64) * MS_PER_DAY) / spec.events_per_day.max(1) as i64;
            events.push(PredictionEvent {
                event_id: record.event_id.clone(),
                ts_ms,
                score,
                groups: BTreeMap::from([(
                    "gender".to_string(),
                    observed.gender.label().to_string(),
                )]),
                features: BTreeMap::from([
                    (
                        "location".to_string(),
                        FeatureValue::Text(observed.location.label().to_string()),
                    ),
                    (
                        "education".to_string(),
                        FeatureValue::Text(observed.education.label().to_string()),
                    ),
                    (
                        "engineer_type".to_string(),
                        FeatureValue::Text(observed.engineer_type.label().to_string()),
                    ),
                    (
                        "experience".to_string(),
                        FeatureValue::Number(observed.experience),
                    ),
                    (
                        "relevant_experience".to_string(),
                        FeatureValue::Number(observed.relevant_experience),
                    ),
                ]),
                attribution: Some(AttributionData {
                    values: record.per_feature_attribution.clone(),
                    baseline_prediction: record.baseline_prediction,
                    method: record.method_tag.clone(),
                }),
                label: None,
                original_score: None,
            });
        }
        stats.push(day_stats);
    }
    Ok((events, stats))
}
