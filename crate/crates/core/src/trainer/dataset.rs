use crate::netmodel::Batch;
use crate::rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::PathBuf;

use super::TrainError;

/// Where the examples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Provenance {
    /// Isotropic Gaussian clusters; class `c` is centered at angle `2 pi c / classes`
    /// on a circle of the given radius in the first two coordinates.
    GaussianBlobs {
        n: usize,
        classes: usize,
        #[serde(default = "two")]
        dim: usize,
        #[serde(default = "one")]
        radius: f64,
        sigma: f64,
    },
    /// Interleaved spiral arms in the plane, one per class.
    Spirals {
        n: usize,
        #[serde(default = "two")]
        classes: usize,
        #[serde(default = "one")]
        turns: f64,
        noise: f64,
    },
    /// Uniform points in `[-1, 1]^2` labelled by the sign XOR of the coordinates.
    Xor { n: usize, noise: f64 },
    /// Rows `label,f1,...,fd`; a non-numeric first line is taken as a header.
    Csv {
        path: PathBuf,
        /// SHA-256 of the file, filled in when loaded.
        #[serde(default)]
        hash: Option<String>,
    },
}

fn two() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

fn default_val_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub source: Provenance,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DatasetSpec {
    pub fn blobs(n: usize, classes: usize, sigma: f64) -> Self {
        Self {
            source: Provenance::GaussianBlobs {
                n,
                classes,
                dim: 2,
                radius: 1.0,
                sigma,
            },
            val_fraction: default_val_fraction(),
            seed: 0,
        }
    }
}

/// A labelled classification dataset with a train/validation split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn all(&self) -> Batch {
        Batch::classification(self.inputs.clone(), self.dim, self.labels.clone())
    }

    pub fn subset(&self, idx: &[usize]) -> Batch {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            x.extend_from_slice(&self.inputs[i * self.dim..(i + 1) * self.dim]);
        }
        Batch::classification(x, self.dim, idx.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn train_batch(&self) -> Batch {
        self.subset(&self.train)
    }

    pub fn val_batch(&self) -> Batch {
        self.subset(&self.val)
    }
}

fn invalid(msg: impl Into<String>) -> TrainError {
    TrainError::InvalidParams(msg.into())
}

/// Builds the dataset deterministically from its spec.
pub fn make_dataset(spec: &DatasetSpec) -> Result<Dataset, TrainError> {
    if !(0.0..1.0).contains(&spec.val_fraction) {
        return Err(invalid("val_fraction must lie in [0, 1)"));
    }
    let mut r = rng::rng(spec.seed);
    let (inputs, dim, labels, provenance) = match &spec.source {
        Provenance::GaussianBlobs {
            n,
            classes,
            dim,
            radius,
            sigma,
        } => {
            if *classes < 2 || n < classes || *dim < 2 || !(*radius > 0.0) || !(*sigma >= 0.0) {
                return Err(invalid("gaussian_blobs needs classes >= 2, n >= classes, dim >= 2, radius > 0, sigma >= 0"));
            }
            let mut x = Vec::with_capacity(n * dim);
            let mut y = Vec::with_capacity(*n);
            for i in 0..*n {
                let c = i % classes;
                let angle = 2.0 * PI * c as f64 / *classes as f64;
                for k in 0..*dim {
                    let center = match k {
                        0 => radius * angle.cos(),
                        1 => radius * angle.sin(),
                        _ => 0.0,
                    };
                    x.push(center + sigma * rng::standard_normal(&mut r));
                }
                y.push(c);
            }
            (x, *dim, y, spec.source.clone())
        }
        Provenance::Spirals {
            n,
            classes,
            turns,
            noise,
        } => {
            if *classes < 2 || n < classes || !(*turns > 0.0) || !(*noise >= 0.0) {
                return Err(invalid(
                    "spirals needs classes >= 2, n >= classes, turns > 0, noise >= 0",
                ));
            }
            let mut x = Vec::with_capacity(n * 2);
            let mut y = Vec::with_capacity(*n);
            for i in 0..*n {
                let c = i % classes;
                let t: f64 = r.gen_range(0.0..1.0);
                let a = 2.0 * PI * (turns * t + c as f64 / *classes as f64);
                x.push(t * a.cos() + noise * rng::standard_normal(&mut r));
                x.push(t * a.sin() + noise * rng::standard_normal(&mut r));
                y.push(c);
            }
            (x, 2, y, spec.source.clone())
        }
        Provenance::Xor { n, noise } => {
            if *n < 2 || !(*noise >= 0.0) {
                return Err(invalid("xor needs n >= 2 and noise >= 0"));
            }
            let mut x = Vec::with_capacity(n * 2);
            let mut y = Vec::with_capacity(*n);
            for _ in 0..*n {
                let a: f64 = r.gen_range(-1.0..1.0);
                let b: f64 = r.gen_range(-1.0..1.0);
                y.push(usize::from((a > 0.0) != (b > 0.0)));
                x.push(a + noise * rng::standard_normal(&mut r));
                x.push(b + noise * rng::standard_normal(&mut r));
            }
            (x, 2, y, spec.source.clone())
        }
        Provenance::Csv { path, .. } => {
            let bytes = std::fs::read(path)
                .map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
            let hash = hex(&Sha256::digest(&bytes));
            let text = String::from_utf8(bytes).map_err(|_| TrainError::CsvParse {
                line: 0,
                reason: "not UTF-8".into(),
            })?;
            let (x, d, y) = parse_csv(&text)?;
            (
                x,
                d,
                y,
                Provenance::Csv {
                    path: path.clone(),
                    hash: Some(hash),
                },
            )
        }
    };
    let n = labels.len();
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let mut perm: Vec<usize> = (0..n).collect();
    rng::partial_shuffle(&mut r, &mut perm, n);
    let n_val = (spec.val_fraction * n as f64).round() as usize;
    let mut val = perm[..n_val].to_vec();
    let mut train = perm[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok(Dataset {
        inputs,
        dim,
        labels,
        classes,
        train,
        val,
        provenance,
    })
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses `label,f1,...,fd` rows. Line numbers in errors are 1-based.
pub fn parse_csv(text: &str) -> Result<(Vec<f64>, usize, Vec<usize>), TrainError> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut dim = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let label = match fields[0].parse::<usize>() {
            Ok(l) => l,
            Err(_) if i == 0 && y.is_empty() => continue,
            Err(_) => {
                return Err(TrainError::CsvParse {
                    line: lineno,
                    reason: format!("bad label {:?}", fields[0]),
                })
            }
        };
        let feats = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| TrainError::CsvParse {
                        line: lineno,
                        reason: format!("bad feature {f:?}"),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if feats.is_empty() {
            return Err(TrainError::CsvParse {
                line: lineno,
                reason: "no features".into(),
            });
        }
        match dim {
            None => dim = Some(feats.len()),
            Some(d) if d != feats.len() => {
                return Err(TrainError::CsvParse {
                    line: lineno,
                    reason: format!("expected {d} features, found {}", feats.len()),
                })
            }
            _ => {}
        }
        x.extend(feats);
        y.push(label);
    }
    let dim = dim.ok_or(TrainError::CsvParse {
        line: 0,
        reason: "no data rows".into(),
    })?;
    Ok((x, dim, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_balanced_and_deterministic() {
        let spec = DatasetSpec::blobs(100, 2, 0.0);
        let a = make_dataset(&spec).unwrap();
        assert_eq!(a, make_dataset(&spec).unwrap());
        assert_eq!(a.labels.iter().filter(|&&c| c == 0).count(), 50);
        // zero spread: the two classes sit exactly on (1,0) and (-1,0)
        for i in 0..100 {
            let x0 = a.inputs[2 * i];
            assert_eq!(x0 > 0.0, a.labels[i] == 0);
        }
        assert_eq!(a.train.len() + a.val.len(), 100);
        assert!(a.train.iter().all(|i| !a.val.contains(i)));
    }

    #[test]
    fn blob_means_match_centers() {
        let spec = DatasetSpec::blobs(4000, 4, 0.5);
        let d = make_dataset(&spec).unwrap();
        for c in 0..4 {
            let pts: Vec<usize> = (0..4000).filter(|&i| d.labels[i] == c).collect();
            let angle = 2.0 * PI * c as f64 / 4.0;
            let tol = 4.0 * 0.5 / (pts.len() as f64).sqrt();
            for (k, center) in [angle.cos(), angle.sin()].iter().enumerate() {
                let m = pts.iter().map(|&i| d.inputs[2 * i + k]).sum::<f64>() / pts.len() as f64;
                assert!(
                    (m - center).abs() < tol,
                    "class {c} coord {k}: {m} vs {center}"
                );
            }
        }
    }

    #[test]
    fn invalid_params() {
        let mut spec = DatasetSpec::blobs(10, 1, 0.1);
        assert!(matches!(
            make_dataset(&spec),
            Err(TrainError::InvalidParams(_))
        ));
        spec = DatasetSpec::blobs(10, 2, 0.1);
        spec.val_fraction = 1.0;
        assert!(make_dataset(&spec).is_err());
    }

    #[test]
    fn spirals_and_xor() {
        for source in [
            Provenance::Spirals {
                n: 60,
                classes: 3,
                turns: 1.0,
                noise: 0.05,
            },
            Provenance::Xor { n: 60, noise: 0.0 },
        ] {
            let d = make_dataset(&DatasetSpec {
                source,
                val_fraction: 0.2,
                seed: 3,
            })
            .unwrap();
            assert_eq!(d.len(), 60);
            assert_eq!(d.val.len(), 12);
            assert_eq!(d.dim, 2);
        }
    }

    #[test]
    fn csv_parsing() {
        let (x, d, y) = parse_csv("label,a,b\n0,1.5,2\n1,-1,0.25\n").unwrap();
        assert_eq!((d, y), (2, vec![0, 1]));
        assert_eq!(x, vec![1.5, 2.0, -1.0, 0.25]);
        let (_, _, y) = parse_csv("1,0.5\n0,0.1\n").unwrap();
        assert_eq!(y, vec![1, 0]);
        assert_eq!(
            parse_csv("0,1\n1,abc\n").unwrap_err(),
            TrainError::CsvParse {
                line: 2,
                reason: "bad feature \"abc\"".into()
            }
        );
        assert!(matches!(
            parse_csv("0,1,2\n1,3\n"),
            Err(TrainError::CsvParse { line: 2, .. })
        ));
        assert!(matches!(
            parse_csv("0,1\nx,3\n"),
            Err(TrainError::CsvParse { line: 2, .. })
        ));
    }

    #[test]
    fn csv_file_records_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "0,1.0,2.0\n1,3.0,4.0\n0,0.0,0.0\n1,1.0,1.0\n").unwrap();
        let d = make_dataset(&DatasetSpec {
            source: Provenance::Csv {
                path: path.clone(),
                hash: None,
            },
            val_fraction: 0.25,
            seed: 0,
        })
        .unwrap();
        match d.provenance {
            Provenance::Csv { hash: Some(h), .. } => assert_eq!(h.len(), 64),
            other => panic!("unexpected provenance {other:?}"),
        }
        assert_eq!(d.val.len(), 1);
    }
}
