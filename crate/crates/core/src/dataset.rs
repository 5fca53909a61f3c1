//! UrbanSound8K metadata ingestion, binary label mapping and stratified splits.
//!
//! The ten source classes are folded into two groups (`Normal` / `Anomalous`)
//! through a [`LabelMapping`] read from a small text config. Splits ignore the
//! predefined folds and use a seeded, stratified shuffle.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("metadata header is missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("malformed metadata at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("unknown class id {0} (expected 0..=9)")]
    UnknownClassId(i64),
    #[error("unknown class name `{0}`")]
    UnknownClassName(String),
    #[error("class {0} has no entry in the label mapping")]
    UnmappedClass(UrbanClass),
    #[error("label mapping line {line}: {reason}")]
    BadMapping { line: usize, reason: String },
    #[error("invalid split spec: {0}")]
    InvalidSplit(String),
    #[error("label {label} has {count} records; at least 2 are required to stratify")]
    TooFewRecords { label: BinaryLabel, count: usize },
    #[error("malformed split manifest at line {line}: {reason}")]
    BadManifest { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// The ten UrbanSound8K classes, in `classID` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UrbanClass {
    AirConditioner,
    CarHorn,
    ChildrenPlaying,
    DogBark,
    Drilling,
    EngineIdling,
    GunShot,
    Jackhammer,
    Siren,
    StreetMusic,
}

impl UrbanClass {
    pub const ALL: [UrbanClass; 10] = [
        UrbanClass::AirConditioner,
        UrbanClass::CarHorn,
        UrbanClass::ChildrenPlaying,
        UrbanClass::DogBark,
        UrbanClass::Drilling,
        UrbanClass::EngineIdling,
        UrbanClass::GunShot,
        UrbanClass::Jackhammer,
        UrbanClass::Siren,
        UrbanClass::StreetMusic,
    ];

    pub fn from_id(id: i64) -> Result<Self> {
        usize::try_from(id)
            .ok()
            .and_then(|i| Self::ALL.get(i).copied())
            .ok_or(DatasetError::UnknownClassId(id))
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    /// Name as it appears in the metadata `class` column.
    pub fn name(self) -> &'static str {
        match self {
            UrbanClass::AirConditioner => "air_conditioner",
            UrbanClass::CarHorn => "car_horn",
            UrbanClass::ChildrenPlaying => "children_playing",
            UrbanClass::DogBark => "dog_bark",
            UrbanClass::Drilling => "drilling",
            UrbanClass::EngineIdling => "engine_idling",
            UrbanClass::GunShot => "gun_shot",
            UrbanClass::Jackhammer => "jackhammer",
            UrbanClass::Siren => "siren",
            UrbanClass::StreetMusic => "street_music",
        }
    }
}

impl fmt::Display for UrbanClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UrbanClass {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| DatasetError::UnknownClassName(s.to_string()))
    }
}

/// Binary target. `Anomalous` is the positive class and encodes as 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    Normal = 0,
    Anomalous = 1,
}

impl BinaryLabel {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn target(self) -> f64 {
        f64::from(self.as_u8())
    }

    pub fn name(self) -> &'static str {
        match self {
            BinaryLabel::Normal => "normal",
            BinaryLabel::Anomalous => "anomalous",
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BinaryLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "normal" => Ok(BinaryLabel::Normal),
            "anomalous" => Ok(BinaryLabel::Anomalous),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

/// One row of the metadata CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub file_name: String,
    pub fold: u8,
    pub class: UrbanClass,
    pub duration_s: Option<f64>,
}

impl ClipRecord {
    pub fn class_id(&self) -> u8 {
        self.class.id()
    }

    /// Path of the audio file relative to the dataset audio root.
    pub fn relative_path(&self) -> String {
        format!("fold{}/{}", self.fold, self.file_name)
    }
}

/// Parses UrbanSound8K-style metadata. Only `slice_file_name`, `fold`,
/// `classID` and `class` are required; `start`/`end` give the duration when present.
pub fn parse_metadata(csv_text: &str) -> Result<Vec<ClipRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| DatasetError::MalformedRow { line: 1, reason: e.to_string() })?
        .clone();
    let column = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or(DatasetError::MissingColumn(name))
    };
    let file_col = column("slice_file_name")?;
    let fold_col = column("fold")?;
    let id_col = column("classID")?;
    let class_col = column("class")?;
    let start_col = column("start").ok();
    let end_col = column("end").ok();

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| DatasetError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let malformed = |reason: String| DatasetError::MalformedRow { line, reason };
        let field = |idx: usize, name: &str| {
            row.get(idx)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| malformed(format!("empty `{name}`")))
        };

        let file_name = field(file_col, "slice_file_name")?.to_string();
        let fold: u8 = field(fold_col, "fold")?
            .parse()
            .map_err(|_| malformed("fold is not an integer".into()))?;
        if !(1..=10).contains(&fold) {
            return Err(malformed(format!("fold {fold} outside 1..=10")));
        }
        let class_id: i64 = field(id_col, "classID")?
            .parse()
            .map_err(|_| malformed("classID is not an integer".into()))?;
        let class = UrbanClass::from_id(class_id)?;
        let class_name = field(class_col, "class")?;
        if class_name != class.name() {
            return Err(malformed(format!(
                "classID {class_id} is `{}` but class column says `{class_name}`",
                class.name()
            )));
        }
        let duration_s = match (start_col, end_col) {
            (Some(s), Some(e)) => {
                let start = row.get(s).and_then(|v| v.parse::<f64>().ok());
                let end = row.get(e).and_then(|v| v.parse::<f64>().ok());
                start.zip(end).map(|(s, e)| e - s)
            }
            _ => None,
        };
        records.push(ClipRecord { file_name, fold, class, duration_s });
    }
    Ok(records)
}

/// What a class maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    Label(BinaryLabel),
    Excluded,
}

impl Assignment {
    pub fn label(self) -> Option<BinaryLabel> {
        match self {
            Assignment::Label(l) => Some(l),
            Assignment::Excluded => None,
        }
    }
}

/// Class to binary-label table. Classes absent from the table are unmapped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMapping {
    entries: BTreeMap<UrbanClass, Assignment>,
}

impl Default for LabelMapping {
    /// Anomalous: dog_bark, drilling, gun_shot, jackhammer, siren.
    /// Normal: air_conditioner, children_playing, engine_idling, street_music.
    /// car_horn is excluded.
    fn default() -> Self {
        use Assignment::*;
        use BinaryLabel::*;
        use UrbanClass::*;
        let entries = [
            (AirConditioner, Label(Normal)),
            (CarHorn, Excluded),
            (ChildrenPlaying, Label(Normal)),
            (DogBark, Label(Anomalous)),
            (Drilling, Label(Anomalous)),
            (EngineIdling, Label(Normal)),
            (GunShot, Label(Anomalous)),
            (Jackhammer, Label(Anomalous)),
            (Siren, Label(Anomalous)),
            (StreetMusic, Label(Normal)),
        ];
        Self { entries: entries.into_iter().collect() }
    }
}

impl LabelMapping {
    pub fn from_entries(entries: impl IntoIterator<Item = (UrbanClass, Assignment)>) -> Self {
        Self { entries: entries.into_iter().collect() }
    }

    /// Parses `class_name = normal | anomalous | excluded` lines. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let bad = |reason: String| DatasetError::BadMapping { line, reason };
            let (name, value) = content
                .split_once('=')
                .ok_or_else(|| bad("expected `class_name = value`".into()))?;
            let class: UrbanClass = name.trim().parse().map_err(|e: DatasetError| bad(e.to_string()))?;
            let assignment = match value.trim() {
                "normal" => Assignment::Label(BinaryLabel::Normal),
                "anomalous" => Assignment::Label(BinaryLabel::Anomalous),
                "excluded" => Assignment::Excluded,
                other => return Err(bad(format!("unknown assignment `{other}`"))),
            };
            if entries.insert(class, assignment).is_some() {
                return Err(bad(format!("class `{class}` mapped twice")));
            }
        }
        Ok(Self { entries })
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (class, assignment) in &self.entries {
            let value = match assignment {
                Assignment::Label(l) => l.name(),
                Assignment::Excluded => "excluded",
            };
            out.push_str(&format!("{class} = {value}\n"));
        }
        out
    }

    pub fn get(&self, class: UrbanClass) -> Option<Assignment> {
        self.entries.get(&class).copied()
    }
}

/// Looks up the binary label for a class id.
pub fn map_binary_label(class_id: i64, mapping: &LabelMapping) -> Result<Assignment> {
    let class = UrbanClass::from_id(class_id)?;
    mapping.get(class).ok_or(DatasetError::UnmappedClass(class))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Fraction of all records that go to train+validation; the rest is test.
    pub train_fraction: f64,
    /// Fraction of the train pool held out for validation.
    pub validation_fraction_of_train: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.8, validation_fraction_of_train: 0.2, seed: 42 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("train_fraction", self.train_fraction),
            ("validation_fraction_of_train", self.validation_fraction_of_train),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(DatasetError::InvalidSplit(format!("{name} = {v} is not inside (0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Validation, Partition::Test];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Partition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Partition::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown partition `{s}`"))
    }
}

/// Index sets into the labeled record list, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn get(&self, partition: Partition) -> &[usize] {
        match partition {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }
}

/// Number of items to hold out of `n`, rounding up like the usual
/// `train_test_split` convention (8,732 at 20% gives 1,747).
fn holdout_count(n: usize, fraction: f64) -> usize {
    let raw = fraction * n as f64;
    // 1e-9 keeps products like 0.19999999999999996 * 10 from rounding up to 2 + 1.
    ((raw - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Distributes `total` across groups proportionally by largest remainder.
/// Ties go to the lower group index.
fn allocate(total: usize, group_sizes: &[usize]) -> Vec<usize> {
    let n: usize = group_sizes.iter().sum();
    if n == 0 {
        return vec![0; group_sizes.len()];
    }
    let quotas: Vec<f64> = group_sizes.iter().map(|&c| total as f64 * c as f64 / n as f64).collect();
    let mut counts: Vec<usize> = quotas
        .iter()
        .zip(group_sizes)
        .map(|(q, &c)| (q.floor() as usize).min(c))
        .collect();
    let mut order: Vec<usize> = (0..group_sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut remaining = total - counts.iter().sum::<usize>();
    for &g in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if counts[g] < group_sizes[g] {
            counts[g] += 1;
            remaining -= 1;
        }
    }
    counts
}

/// Stratified shuffle into test, validation and train.
///
/// Partition sizes come first: test is `ceil(n * (1 - train_fraction))`,
/// validation is `ceil(pool * validation_fraction_of_train)` of the remaining
/// pool. Each label then receives every partition's proportional share,
/// rounded so that per-label and per-partition totals both come out exact;
/// every count is within one item of `label_total * partition_size / n`.
pub fn stratified_split(labels: &[BinaryLabel], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut by_label: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, l) in labels.iter().enumerate() {
        by_label[l.as_u8() as usize].push(i);
    }
    for (label, group) in [BinaryLabel::Normal, BinaryLabel::Anomalous].into_iter().zip(&by_label) {
        if group.len() < 2 {
            return Err(DatasetError::TooFewRecords { label, count: group.len() });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for group in by_label.iter_mut() {
        group.shuffle(&mut rng);
    }

    let n = labels.len();
    let n_test = holdout_count(n, 1.0 - spec.train_fraction);
    let n_val = holdout_count(n - n_test, spec.validation_fraction_of_train);
    let totals = [n_test, n_val, n - n_test - n_val];
    // With two labels, rounding the first row to floor/ceil with an exact row
    // sum forces the second row (column total minus first row) to floor/ceil too.
    let normal = allocate(by_label[0].len(), &totals);
    let anomalous: Vec<usize> = totals.iter().zip(&normal).map(|(t, c)| t - c).collect();

    let mut split = Split::default();
    for (group, counts) in by_label.iter().zip([&normal, &anomalous]) {
        let (test, rest) = group.split_at(counts[0]);
        let (val, train) = rest.split_at(counts[1]);
        split.test.extend_from_slice(test);
        split.validation.extend_from_slice(val);
        split.train.extend_from_slice(train);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// One line of the split manifest: `file_name<TAB>partition<TAB>label`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub file_name: String,
    pub partition: Partition,
    pub label: BinaryLabel,
}

pub fn write_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!("{}\t{}\t{}\n", e.file_name, e.partition, e.label));
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line = idx + 1;
        let bad = |reason: String| DatasetError::BadManifest { line, reason };
        let fields: Vec<&str> = raw.split('\t').collect();
        let [file_name, partition, label] = fields[..] else {
            return Err(bad(format!("expected 3 tab-separated fields, found {}", fields.len())));
        };
        entries.push(ManifestEntry {
            file_name: file_name.to_string(),
            partition: partition.parse().map_err(bad)?,
            label: label.parse().map_err(bad)?,
        });
    }
    Ok(entries)
}
