#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use esad_core::audio::{encode_wav_pcm16, AudioClip};
use esad_core::dataset::UrbanClass;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const HEADER: &str = "slice_file_name,fsID,start,end,salience,fold,classID,class\n";

/// Tone plus noise whose pitch depends on the class, so the binary task is learnable.
pub fn class_clip(class: UrbanClass, rng: &mut ChaCha8Rng, seconds: f64, rate: u32) -> AudioClip {
    let n = (seconds * f64::from(rate)) as usize;
    let f = 180.0 + 330.0 * f64::from(class.id()) * rng.random_range(0.95..1.05);
    let amp = rng.random_range(0.2..0.5);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / f64::from(rate);
            let tone = amp * (std::f64::consts::TAU * f * t + phase).sin();
            (tone + rng.random_range(-0.05..0.05)) as f32
        })
        .collect();
    AudioClip::new(samples, rate)
}

/// Writes `metadata/UrbanSound8K.csv` and `audio/foldN/*.wav` for the given
/// `(class, count)` pairs and returns the dataset root.
pub fn synth_dataset(root: &Path, classes: &[(UrbanClass, usize)], seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::fs::create_dir_all(root.join("metadata")).unwrap();
    let mut csv = String::from(HEADER);
    let mut k = 0usize;
    for &(class, count) in classes {
        for j in 0..count {
            let fold = 1 + k % 10;
            let name = format!("{}-{}-0-{j}.wav", 1000 + k, class.id());
            let dir = root.join("audio").join(format!("fold{fold}"));
            std::fs::create_dir_all(&dir).unwrap();
            let rate = if k % 2 == 0 { 22_050 } else { 16_000 };
            let clip = class_clip(class, &mut rng, 0.7, rate);
            std::fs::write(dir.join(&name), encode_wav_pcm16(&clip)).unwrap();
            csv.push_str(&format!("{name},{},0.0,0.7,1,{fold},{},{}\n", 1000 + k, class.id(), class.name()));
            k += 1;
        }
    }
    std::fs::write(root.join("metadata").join("UrbanSound8K.csv"), csv).unwrap();
    root.to_path_buf()
}

/// `per_class` clips of every class; the default mapping drops car_horn.
pub fn default_corpus(root: &Path, per_class: usize, seed: u64) -> PathBuf {
    let classes: Vec<(UrbanClass, usize)> = UrbanClass::ALL.iter().map(|&c| (c, per_class)).collect();
    synth_dataset(root, &classes, seed)
}

pub const FAST_CONFIG: &str = "[train]\nmax_epochs = 6\nbatch_size = 16\n\n[quantize]\ncalibration_size = 64\n";

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("esad.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn esad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_esad"))
        .args(args)
        .env_remove("ESAD_DATA_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn esad")
}

/// Runs a command and panics with its stderr unless it succeeded.
pub fn esad_ok(args: &[&str]) -> Output {
    let out = esad(args);
    assert!(out.status.success(), "esad {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

pub fn stderr_last_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or("").to_string()
}

/// prepare, extract, train, quantize, evaluate into `out`.
pub fn full_pipeline(data: &Path, out: &Path, config: &Path, seed: u64) {
    let (d, o, c, s) = (data.to_str().unwrap(), out.to_str().unwrap(), config.to_str().unwrap(), seed.to_string());
    for cmd in ["prepare", "extract", "train", "quantize", "evaluate"] {
        let mut args = vec![cmd, "--out", o, "--config", c, "--seed", &s];
        if cmd == "prepare" {
            args.extend(["--data", d]);
        }
        esad_ok(&args);
    }
}
