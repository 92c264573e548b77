//! File formats: JSON containers for checkpoints, prototype pools, teachers,
//! and sample-pool directories, plus PNG rendering and CSV helpers.
//!
//! Every container carries `format_version` and a `kind` tag and is plain
//! JSON, so the artifacts stay inspectable with standard tools. Sample pools
//! are a directory of per-sample flat vectors next to a manifest.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::compose::{PoeTeacher, Selection};
use crate::discovery::PrototypeExpert;
use crate::distill::LoraAdapter;
use crate::net::ToyDenoiser;
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Write a value as pretty JSON, creating parent directories.
pub fn save_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let f = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

/// Read a JSON value.
pub fn load_json<V: DeserializeOwned>(path: &Path) -> Result<V> {
    let bytes = fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn check_container(kind_found: &str, kind_want: &str, version: u32) -> Result<()> {
    if kind_found != kind_want {
        return Err(Error::Checkpoint(format!(
            "expected kind '{kind_want}', found '{kind_found}'"
        )));
    }
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (supported: {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

/// Trained-backbone container: schedule metadata, layer shapes, flat
/// parameter arrays, and the embedding table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenoiserCheckpoint<T> {
    pub format_version: u32,
    pub kind: String,
    pub schedule: NoiseSchedule<T>,
    pub model: ToyDenoiser<T>,
}

pub fn save_denoiser<T: Scalar + Serialize>(
    path: &Path,
    model: &ToyDenoiser<T>,
    schedule: &NoiseSchedule<T>,
) -> Result<()> {
    save_json(
        path,
        &DenoiserCheckpoint {
            format_version: FORMAT_VERSION,
            kind: "toy-denoiser".into(),
            schedule: schedule.clone(),
            model: model.clone(),
        },
    )
}

pub fn load_denoiser<T: Scalar + DeserializeOwned>(
    path: &Path,
) -> Result<(ToyDenoiser<T>, NoiseSchedule<T>)> {
    let ckpt: DenoiserCheckpoint<T> = load_json(path)?;
    check_container(&ckpt.kind, "toy-denoiser", ckpt.format_version)?;
    Ok((ckpt.model, ckpt.schedule))
}

/// Adapter container, keyed by the query it was distilled for.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdapterCheckpoint<T> {
    pub format_version: u32,
    pub kind: String,
    pub query_id: String,
    pub adapter: LoraAdapter<T>,
    pub c_new: Vec<T>,
}

pub fn save_adapter<T: Scalar + Serialize>(
    path: &Path,
    query_id: &str,
    adapter: &LoraAdapter<T>,
    c_new: &[T],
) -> Result<()> {
    save_json(
        path,
        &AdapterCheckpoint {
            format_version: FORMAT_VERSION,
            kind: "lora-adapter".into(),
            query_id: query_id.into(),
            adapter: adapter.clone(),
            c_new: c_new.to_vec(),
        },
    )
}

pub fn load_adapter<T: Scalar + DeserializeOwned>(
    path: &Path,
) -> Result<(String, LoraAdapter<T>, Vec<T>)> {
    let ckpt: AdapterCheckpoint<T> = load_json(path)?;
    check_container(&ckpt.kind, "lora-adapter", ckpt.format_version)?;
    Ok((ckpt.query_id, ckpt.adapter, ckpt.c_new))
}

/// Discovered prototype pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrototypePoolFile<T> {
    pub format_version: u32,
    pub kind: String,
    pub prototypes: Vec<PrototypeExpert<T>>,
}

pub fn save_prototypes<T: Scalar + Serialize>(
    path: &Path,
    prototypes: &[PrototypeExpert<T>],
) -> Result<()> {
    save_json(
        path,
        &PrototypePoolFile {
            format_version: FORMAT_VERSION,
            kind: "prototype-pool".into(),
            prototypes: prototypes.to_vec(),
        },
    )
}

pub fn load_prototypes<T: Scalar + DeserializeOwned>(path: &Path) -> Result<Vec<PrototypeExpert<T>>> {
    let file: PrototypePoolFile<T> = load_json(path)?;
    check_container(&file.kind, "prototype-pool", file.format_version)?;
    Ok(file.prototypes)
}

/// Composed teacher with its selection provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeacherFile<T> {
    pub format_version: u32,
    pub kind: String,
    pub mu: Vec<T>,
    pub var: Vec<T>,
    pub selected: Vec<usize>,
    pub weights: Vec<Vec<T>>,
}

pub fn save_teacher<T: Scalar + Serialize>(
    path: &Path,
    teacher: &PoeTeacher<T>,
    selection: &Selection<T>,
) -> Result<()> {
    save_json(
        path,
        &TeacherFile {
            format_version: FORMAT_VERSION,
            kind: "poe-teacher".into(),
            mu: teacher.mu.clone(),
            var: teacher.var.clone(),
            selected: selection.indices.clone(),
            weights: selection.weights.clone(),
        },
    )
}

pub fn load_teacher<T: Scalar + DeserializeOwned>(path: &Path) -> Result<(PoeTeacher<T>, Vec<usize>)> {
    let file: TeacherFile<T> = load_json(path)?;
    check_container(&file.kind, "poe-teacher", file.format_version)?;
    Ok((PoeTeacher { mu: file.mu, var: file.var }, file.selected))
}

/// Sample-pool manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolManifest {
    pub format_version: u32,
    pub kind: String,
    pub method: String,
    pub class_id: usize,
    pub query_id: String,
    pub seed: u64,
    pub config_hash: String,
    pub n: usize,
    pub dim: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampleFile<T> {
    values: Vec<T>,
}

/// Save one flat vector (query images, single samples).
pub fn save_vector<T: Scalar + Serialize>(path: &Path, values: &[T]) -> Result<()> {
    save_json(path, &SampleFile { values: values.to_vec() })
}

/// Load one flat vector.
pub fn load_vector<T: Scalar + DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f: SampleFile<T> = load_json(path)?;
    Ok(f.values)
}

/// Persist samples as per-sample flat vectors plus a manifest; images are
/// additionally rendered to PNG when a resolution is given.
#[allow(clippy::too_many_arguments)]
pub fn save_sample_pool<T: Scalar + Serialize>(
    dir: &Path,
    samples: &[Vec<T>],
    method: &str,
    class_id: usize,
    query_id: &str,
    seed: u64,
    config_hash: &str,
    image_resolution: Option<usize>,
) -> Result<PoolManifest> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let name = format!("sample_{i:04}.json");
        save_json(&dir.join(&name), &SampleFile { values: s.clone() })?;
        if let Some(res) = image_resolution {
            write_png(&dir.join(format!("sample_{i:04}.png")), s, res, res)?;
        }
        files.push(name);
    }
    let manifest = PoolManifest {
        format_version: FORMAT_VERSION,
        kind: "sample-pool".into(),
        method: method.into(),
        class_id,
        query_id: query_id.into(),
        seed,
        config_hash: config_hash.into(),
        n: samples.len(),
        dim: samples.first().map_or(0, Vec::len),
        files,
    };
    save_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Load a sample pool back from its manifest.
pub fn load_sample_pool<T: Scalar + DeserializeOwned>(
    dir: &Path,
) -> Result<(PoolManifest, Vec<Vec<T>>)> {
    let manifest: PoolManifest = load_json(&dir.join("manifest.json"))?;
    check_container(&manifest.kind, "sample-pool", manifest.format_version)?;
    let mut samples = Vec::with_capacity(manifest.files.len());
    for f in &manifest.files {
        let s: SampleFile<T> = load_json(&dir.join(f))?;
        samples.push(s.values);
    }
    Ok((manifest, samples))
}

/// Render a flat [-1, 1] RGB vector (row-major, channels last) to a PNG file.
pub fn write_png<T: Scalar>(path: &Path, values: &[T], width: usize, height: usize) -> Result<()> {
    if values.len() != width * height * 3 {
        return Err(Error::DimensionMismatch { expected: width * height * 3, got: values.len() });
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let f = BufWriter::new(fs::File::create(path)?);
    let mut enc = png::Encoder::new(f, width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::Checkpoint(format!("png header: {e}")))?;
    let bytes: Vec<u8> = values
        .iter()
        .map(|&v| {
            let unit = (v.to_f64().unwrap_or(0.0) + 1.0) / 2.0;
            (unit.clamp(0.0, 1.0) * 255.0).round() as u8
        })
        .collect();
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::Checkpoint(format!("png data: {e}")))?;
    Ok(())
}

/// FNV-1a hash of a canonical JSON encoding; stable across runs.
pub fn config_hash<V: Serialize>(value: &V) -> Result<String> {
    let canonical = serde_json::to_string(value)?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

/// Join CSV fields; fields are plain tokens and fixed-precision numbers, so
/// no quoting is needed and output bytes are deterministic.
pub fn csv_line(fields: &[String]) -> String {
    fields.join(",")
}

/// Atomic-ish file write: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp: PathBuf = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::DenoiserArch;

    fn tmpdir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("modepoe-io-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn denoiser_checkpoint_round_trip() {
        let dir = tmpdir("ckpt");
        let arch = DenoiserArch { dim: 2, width: 4, hidden_layers: 1, time_feat_dim: 4, n_classes: 2 };
        let model: ToyDenoiser<f64> = ToyDenoiser::init(arch, 7);
        let s: NoiseSchedule<f64> = NoiseSchedule::default_linear();
        let path = dir.join("backbone.json");
        save_denoiser(&path, &model, &s).unwrap();
        let (loaded, s2) = load_denoiser::<f64>(&path).unwrap();
        assert_eq!(model, loaded);
        assert_eq!(s, s2);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let dir = tmpdir("kind");
        let protos: Vec<PrototypeExpert<f64>> = vec![PrototypeExpert {
            m: vec![0.0],
            var: vec![1.0],
            origin_t: 10,
            origin_grad_norm: 0.0,
            cov_flagged: false,
        }];
        let path = dir.join("pool.json");
        save_prototypes(&path, &protos).unwrap();
        assert!(load_teacher::<f64>(&path).is_err());
        assert_eq!(load_prototypes::<f64>(&path).unwrap(), protos);
    }

    #[test]
    fn sample_pool_round_trip_with_png() {
        let dir = tmpdir("pool");
        let samples: Vec<Vec<f64>> = vec![vec![0.0; 2 * 2 * 3], vec![0.5; 2 * 2 * 3]];
        let m = save_sample_pool(&dir, &samples, "poe", 3, "q0", 9, "abc", Some(2)).unwrap();
        assert_eq!(m.n, 2);
        let (m2, loaded) = load_sample_pool::<f64>(&dir).unwrap();
        assert_eq!(m2.method, "poe");
        assert_eq!(loaded, samples);
        assert!(dir.join("sample_0000.png").exists());
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        #[derive(Serialize)]
        struct C {
            a: u32,
            b: String,
        }
        let h1 = config_hash(&C { a: 1, b: "x".into() }).unwrap();
        let h2 = config_hash(&C { a: 1, b: "x".into() }).unwrap();
        let h3 = config_hash(&C { a: 2, b: "x".into() }).unwrap();
        assert_eq!(h1, h2);
        assert_ne!(h1, h3);
        assert_eq!(h1.len(), 16);
    }
}
