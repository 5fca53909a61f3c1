use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use esad_core::dataset::{
    parse_metadata, stratified_split, write_manifest, Assignment, BinaryLabel, ClipRecord, LabelMapping,
    ManifestEntry, Partition, UrbanClass,
};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, Context, ErrorCode, Result};
use crate::layout::{self, Layout};
use crate::manifest::RunRecorder;

/// Where prepare found the dataset; read back by extract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub metadata: PathBuf,
    pub audio_root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class_id: u8,
    pub class: String,
    /// `normal`, `anomalous`, `excluded` or `unmapped`.
    pub assignment: String,
    pub clips: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTally {
    pub normal: usize,
    pub anomalous: usize,
}

impl LabelTally {
    fn add(&mut self, label: BinaryLabel) {
        match label {
            BinaryLabel::Normal => self.normal += 1,
            BinaryLabel::Anomalous => self.anomalous += 1,
        }
    }
}

/// `label_counts.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub records: usize,
    pub classes: Vec<ClassCount>,
    pub included: LabelTally,
    pub excluded: usize,
    /// Included records dropped because their file is missing or not a WAV.
    pub unreadable: Vec<String>,
    pub partitions: BTreeMap<String, LabelTally>,
}

pub fn locate_metadata(data: &Path) -> Result<PathBuf> {
    let candidates = [data.join("metadata").join("UrbanSound8K.csv"), data.join("UrbanSound8K.csv")];
    candidates.iter().find(|p| p.is_file()).cloned().ok_or_else(|| {
        CliError::new(ErrorCode::MissingMetadata, format!("no metadata CSV at {}", candidates[0].display()))
    })
}

/// `<data>/audio` when present (the stock archive layout), else `<data>`.
pub fn audio_root(data: &Path) -> PathBuf {
    let nested = data.join("audio");
    if nested.is_dir() {
        nested
    } else {
        data.to_path_buf()
    }
}

fn has_wav_header(path: &Path) -> bool {
    let mut head = [0u8; 12];
    std::fs::File::open(path).and_then(|mut f| f.read_exact(&mut head)).is_ok()
        && &head[..4] == b"RIFF"
        && &head[8..12] == b"WAVE"
}

fn assignment_name(a: Option<Assignment>) -> &'static str {
    match a {
        Some(Assignment::Label(l)) => l.name(),
        Some(Assignment::Excluded) => "excluded",
        None => "unmapped",
    }
}

pub fn load_mapping(path: Option<&Path>) -> Result<LabelMapping> {
    match path {
        None => Ok(LabelMapping::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::new(ErrorCode::Config, format!("{}: {e}", p.display())))?;
            LabelMapping::parse(&text).with_code(ErrorCode::Config, &p.display().to_string())
        }
    }
}

pub fn run(cfg: &PipelineConfig, layout: &Layout, data: &Path) -> Result<LabelCounts> {
    let mut rec = RunRecorder::start("prepare", cfg);
    let metadata = locate_metadata(data)?;
    rec.input(&metadata);
    let csv = std::fs::read_to_string(&metadata).map_err(|e| CliError::io(&metadata, e))?;
    let records = parse_metadata(&csv).with_code(ErrorCode::BadInput, &metadata.display().to_string())?;
    let mapping = load_mapping(cfg.mapping.as_deref())?;
    if let Some(m) = &cfg.mapping {
        rec.input(m);
    }
    let root = audio_root(data);

    let mut per_class = [0usize; 10];
    let mut excluded = 0usize;
    let mut unreadable = Vec::new();
    let mut kept: Vec<(&ClipRecord, BinaryLabel)> = Vec::new();
    for r in &records {
        per_class[usize::from(r.class_id())] += 1;
        match mapping.get(r.class).and_then(Assignment::label) {
            None => excluded += 1,
            Some(label) => {
                let rel = r.relative_path();
                if has_wav_header(&root.join(&rel)) {
                    kept.push((r, label));
                } else {
                    log::warn!("dropping unreadable clip {rel}");
                    unreadable.push(rel);
                }
            }
        }
    }
    for class in UrbanClass::ALL {
        let n = per_class[usize::from(class.id())];
        match mapping.get(class) {
            None if n > 0 => log::warn!("class {class} is not in the mapping; {n} clips excluded"),
            Some(Assignment::Excluded) if n > 0 => log::info!("class {class} excluded: {n} clips"),
            _ => {}
        }
    }
    if !unreadable.is_empty() {
        log::warn!("{} of {} included clips dropped as unreadable", unreadable.len(), unreadable.len() + kept.len());
    }

    let labels: Vec<BinaryLabel> = kept.iter().map(|(_, l)| *l).collect();
    let split = stratified_split(&labels, &cfg.split_spec()).code(ErrorCode::BadInput)?;
    let mut partition = vec![Partition::Train; kept.len()];
    for p in Partition::ALL {
        for &i in split.get(p) {
            partition[i] = p;
        }
    }
    let entries: Vec<ManifestEntry> = kept
        .iter()
        .zip(&partition)
        .map(|((r, label), &p)| ManifestEntry { file_name: r.relative_path(), partition: p, label: *label })
        .collect();

    let mut included = LabelTally::default();
    let mut partitions: BTreeMap<String, LabelTally> = BTreeMap::new();
    for e in &entries {
        included.add(e.label);
        partitions.entry(e.partition.name().to_string()).or_default().add(e.label);
    }
    let counts = LabelCounts {
        records: records.len(),
        classes: UrbanClass::ALL
            .iter()
            .map(|&c| ClassCount {
                class_id: c.id(),
                class: c.name().to_string(),
                assignment: assignment_name(mapping.get(c)).to_string(),
                clips: per_class[usize::from(c.id())],
            })
            .collect(),
        included,
        excluded,
        unreadable,
        partitions,
    };
    log::info!(
        "{} records: {} normal, {} anomalous, {} excluded, {} unreadable",
        counts.records,
        included.normal,
        included.anomalous,
        excluded,
        counts.unreadable.len()
    );

    layout::create_dir(&layout.root)?;
    layout::write_bytes(&layout.split(), write_manifest(&entries).as_bytes())?;
    layout::write_json(&layout.label_counts(), &counts)?;
    layout::write_json(&layout.dataset(), &DatasetInfo { metadata, audio_root: root })?;
    for p in [layout.split(), layout.label_counts(), layout.dataset()] {
        rec.output(&p);
    }
    rec.finish(&layout.root)?;
    Ok(counts)
}
