#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use hamlet_core::cohort::{build_dataset, CohortSpec};
use hamlet_core::colearn::{ArchPreset, ColearnConfig, Run, RunStatus, TrainPlan};
use hamlet_core::nn::TrainConfig;
use hamlet_core::signal::PipelineConfig;
use hamlet_core::NUM_CLASSES;
use serde_json::Value;

const SCHEMA_BASE: &str = "https://hamlet.invalid/schemas/";

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

fn load(name: &str) -> Value {
    let path = schema_dir().join(format!("{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

/// Validate a payload against a published schema, panicking with every violation.
pub fn validate(name: &str, value: &Value) {
    let common = jsonschema::Resource::from_contents(load("common")).unwrap();
    let validator = jsonschema::options()
        .with_base_uri(SCHEMA_BASE)
        .with_resource(format!("{SCHEMA_BASE}common.schema.json"), common)
        .build(&load(name))
        .unwrap_or_else(|e| panic!("schema {name} does not compile: {e}"));
    let errors: Vec<String> = validator
        .iter_errors(value)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect();
    assert!(
        errors.is_empty(),
        "{name} payload invalid:\n{}\n{value:#}",
        errors.join("\n")
    );
}

pub fn dataset_dir() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let spec = CohortSpec {
            patient_count: 4,
            per_class: [16; NUM_CLASSES],
            window_s: 4.0,
            ..CohortSpec::default()
        };
        let pipeline = PipelineConfig {
            window_s: 4.0,
            context_s: 1.5,
            ..PipelineConfig::for_rate(64.0)
        };
        build_dataset(&dir, &spec, &pipeline).unwrap();
        dir
    })
}

pub fn tiny_config() -> ColearnConfig {
    ColearnConfig {
        arch: ArchPreset::Compact,
        rounds: 2,
        budget: Some(5),
        plan: TrainPlan {
            pretrain_epochs: 2,
            finetune_epochs: 1,
            head_epochs: 3,
            memory_size: 10,
            normalize_embedding: false,
            train: TrainConfig {
                batch_size: 32,
                head_hidden: 16,
                ..TrainConfig::default()
            },
        },
        ..ColearnConfig::default()
    }
}

/// A run trained through round 1 and parked for review, built once.
pub fn parked_run() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep().join("demo");
        let (mut run, store) = Run::create(&dir, dataset_dir(), tiny_config()).unwrap();
        run.drive(&store).unwrap();
        assert_eq!(run.state.status, RunStatus::AwaitingReview);
        dir
    })
}

fn copy_dir(src: &Path, dst: &Path) {
    std::fs::create_dir_all(dst).unwrap();
    for entry in std::fs::read_dir(src).unwrap() {
        let path = entry.unwrap().path();
        let target = dst.join(path.file_name().unwrap());
        if path.is_dir() {
            copy_dir(&path, &target);
        } else {
            std::fs::copy(&path, &target).unwrap();
        }
    }
}

/// Private copy of a run so tests can mutate it.
pub fn copy_run(src: &Path) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(src, dir.path());
    dir
}
