use crate::netmodel::ParamVector;
use crate::rng::PRNG_ALGORITHM;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

use super::dataset::hex;
use super::{MetricRecord, RunConfig, TrainError};

pub const SCHEMA_VERSION: u32 = 1;
pub const MOMENTUM_CONVENTION: &str = "v <- beta*v + g; theta <- theta - eta*v";

/// First line of every metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema_version: u32,
    /// The fully resolved configuration.
    pub config: RunConfig,
    pub prng_algorithm: String,
    pub artifact_version: String,
    /// SHA-256 of the compact JSON encoding of `config`.
    pub config_hash: String,
    pub momentum_convention: String,
    pub steps_per_epoch: usize,
    /// Training-set positions used for the Hessian estimates.
    pub eval_subset: Vec<usize>,
    pub steps_completed: u64,
    pub diverged: bool,
}

impl RunMetadata {
    pub fn new(
        config: RunConfig,
        eval_subset: Vec<usize>,
        steps_per_epoch: usize,
        steps_completed: u64,
        diverged: bool,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_hash: config_hash(&config),
            config,
            prng_algorithm: PRNG_ALGORITHM.into(),
            artifact_version: env!("CARGO_PKG_VERSION").into(),
            momentum_convention: MOMENTUM_CONVENTION.into(),
            steps_per_epoch,
            eval_subset,
            steps_completed,
            diverged,
        }
    }
}

pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("configs always serialize");
    hex(&Sha256::digest(json))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub metadata: RunMetadata,
    pub records: Vec<MetricRecord>,
}

impl RunLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.metadata).expect("metadata serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TrainError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| TrainError::Format("empty log".into()))?;
        let metadata: RunMetadata =
            serde_json::from_str(first).map_err(|e| TrainError::Format(format!("line 1: {e}")))?;
        if metadata.schema_version != SCHEMA_VERSION {
            return Err(TrainError::Format(format!(
                "unsupported schema_version {}",
                metadata.schema_version
            )));
        }
        let records = lines
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| TrainError::Format(format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { metadata, records })
    }
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn io(path: &Path, e: std::io::Error) -> TrainError {
    TrainError::Io(format!("{}: {e}", path.display()))
}

pub fn write_jsonl(path: &Path, log: &RunLog) -> Result<(), TrainError> {
    write_atomic(path, log.to_jsonl().as_bytes()).map_err(|e| io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<RunLog, TrainError> {
    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
    RunLog::from_jsonl(&text)
}

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"BKLB";
const SNAPSHOT_VERSION: u32 = 1;

/// Debug dump of a parameter vector: `BKLB`, u32 version, u64 length, then
/// the values, all little-endian.
pub fn write_snapshot(path: &Path, theta: &ParamVector) -> Result<(), TrainError> {
    let mut buf = Vec::with_capacity(16 + 8 * theta.len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(theta.len() as u64).to_le_bytes());
    for v in &theta.0 {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &buf).map_err(|e| io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<ParamVector, TrainError> {
    let buf = std::fs::read(path).map_err(|e| io(path, e))?;
    let bad = |why: &str| TrainError::Format(format!("{}: {why}", path.display()));
    if buf.len() < 16 || &buf[..4] != SNAPSHOT_MAGIC {
        return Err(bad("not a BKLB snapshot"));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(bad("unsupported snapshot version"));
    }
    let d = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    if buf.len() != 16 + 8 * d {
        return Err(bad("length does not match header"));
    }
    Ok(ParamVector(
        buf[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Activation, LossKind, MlpSpec};
    use crate::trainer::{run_training, DatasetSpec};

    #[test]
    fn jsonl_round_trip_with_nulls() {
        let mut c = RunConfig::new(
            MlpSpec::new(
                &[2, 4, 2],
                Activation::Relu,
                LossKind::SoftmaxCrossEntropy,
                0,
            ),
            DatasetSpec::blobs(60, 2, 0.4),
            0.05,
            10,
            1,
        );
        c.spectra.enabled = false;
        c.eval_every = 2;
        let out = run_training(&c).unwrap();
        let log = RunLog {
            metadata: out.metadata,
            records: out.records,
        };
        let text = log.to_jsonl();
        assert!(text.lines().nth(1).unwrap().contains("\"lambda_k1\":null"));
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in [
            "schema_version",
            "config",
            "prng_algorithm",
            "artifact_version",
            "config_hash",
        ] {
            assert!(first.get(key).is_some(), "{key}");
        }
        assert_eq!(RunLog::from_jsonl(&text).unwrap(), log);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.jsonl");
        write_jsonl(&p, &log).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), text);
        assert_eq!(read_jsonl(&p).unwrap(), log);
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("theta.bin");
        let theta = ParamVector(vec![1.5, -0.0, f64::MIN_POSITIVE]);
        write_snapshot(&p, &theta).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"BKLB");
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(read_snapshot(&p).unwrap(), theta);
        std::fs::write(&p, &bytes[..20]).unwrap();
        assert!(read_snapshot(&p).is_err());
    }
}
