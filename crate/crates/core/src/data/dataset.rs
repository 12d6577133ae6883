use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::pcld::{encode_pcld, read_pcld};
use super::{corrupt, generate_shape, DataError, ShapeKind, SubMode};
use crate::geometry::PointCloud;

pub const MANIFEST_FILE: &str = "manifest.tsv";
const MANIFEST_HEADER: &str = "path\tclass_id\tsplit\tsubmode\tseed";

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub classes: Vec<ShapeKind>,
    pub samples_per_cell: usize,
    pub points: usize,
    pub submodes: Vec<SubMode>,
    /// Fraction of each (class, sub-mode) cell that goes to the train split;
    /// the rest is test.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            classes: ShapeKind::ALL.to_vec(),
            samples_per_cell: 40,
            points: 256,
            submodes: SubMode::ALL.to_vec(),
            train_fraction: 0.5,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let err = |m: String| Err(DataError::Spec(m));
        if self.classes.len() < 2 {
            return err(format!("need at least 2 classes, got {}", self.classes.len()));
        }
        let mut seen = self.classes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.classes.len() {
            return err("duplicate class kind".into());
        }
        if self.submodes.is_empty() {
            return err("no sub-modes".into());
        }
        if self.samples_per_cell == 0 {
            return err("samples_per_cell must be positive".into());
        }
        if self.points < 16 {
            return Err(DataError::TooFewPoints(self.points));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return err(format!("train_fraction {} outside [0, 1]", self.train_fraction));
        }
        Ok(())
    }

    pub fn num_rows(&self) -> usize {
        self.classes.len() * self.submodes.len() * self.samples_per_cell
    }

    /// Test samples per cell.
    pub fn test_per_cell(&self) -> usize {
        ((1.0 - self.train_fraction) * self.samples_per_cell as f64).round() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub path: String,
    pub class_id: usize,
    pub split: Split,
    pub submode: SubMode,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", r.path, r.class_id, r.split, r.submode, r.seed));
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, DataError> {
        let bad = |line: usize, reason: String| DataError::Format {
            path: path.to_path_buf(),
            reason: format!("line {line}: {reason}"),
        };
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(bad(1, "missing manifest header".into()));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad(n, format!("expected 5 fields, got {}", f.len())));
            }
            rows.push(ManifestRow {
                path: f[0].to_string(),
                class_id: f[1].parse().map_err(|e| bad(n, format!("class_id: {e}")))?,
                split: f[2].parse().map_err(|e| bad(n, e))?,
                submode: f[3].parse().map_err(|e: DataError| bad(n, e.to_string()))?,
                seed: f[4].parse().map_err(|e| bad(n, format!("seed: {e}")))?,
            });
        }
        Ok(Self { rows })
    }

    pub fn num_classes(&self) -> usize {
        self.rows.iter().map(|r| r.class_id + 1).max().unwrap_or(0)
    }
}

/// Seed of row `index`, so every cloud has an independent stream and
/// generation order does not matter.
pub fn row_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finaliser over the combined word
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Labeled clouds plus their manifest rows, index-aligned.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub rows: Vec<ManifestRow>,
    pub clouds: Vec<PointCloud>,
}

impl Dataset {
    /// Generates every row in memory; identical to what [`build_dataset`] writes.
    pub fn generate(spec: &DatasetSpec) -> Result<Self, DataError> {
        spec.validate()?;
        let per_class = spec.submodes.len() * spec.samples_per_cell;
        let test_from = spec.samples_per_cell - spec.test_per_cell();
        let pairs: Vec<(ManifestRow, PointCloud)> = (0..spec.num_rows())
            .into_par_iter()
            .map(|r| {
                let class_id = r / per_class;
                let submode = spec.submodes[(r % per_class) / spec.samples_per_cell];
                let i = r % spec.samples_per_cell;
                let seed = row_seed(spec.seed, r);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let kind = spec.classes[class_id];
                let clean = generate_shape(kind, spec.points, &mut rng)?;
                let mut cloud = corrupt(&clean, submode, &mut rng).with_label(class_id);
                cloud.quantize_f32();
                let row = ManifestRow {
                    path: format!("clouds/{:02}_{}_{:04}.pcld", class_id, submode, i),
                    class_id,
                    split: if i >= test_from { Split::Test } else { Split::Train },
                    submode,
                    seed,
                };
                Ok((row, cloud))
            })
            .collect::<Result<_, DataError>>()?;
        let (rows, clouds) = pairs.into_iter().unzip();
        Ok(Self { rows, clouds })
    }

    pub fn load(dir: &Path) -> Result<Self, DataError> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(|e| DataError::io(&mpath, e))?;
        let manifest = Manifest::parse(&text, &mpath)?;
        let clouds = manifest
            .rows
            .iter()
            .map(|r| {
                let mut c = read_pcld(&dir.join(&r.path))?;
                c.label = Some(r.class_id);
                c.meta.submode = r.submode;
                Ok(c)
            })
            .collect::<Result<_, DataError>>()?;
        Ok(Self {
            rows: manifest.rows,
            clouds,
        })
    }

    pub fn manifest(&self) -> Manifest {
        Manifest { rows: self.rows.clone() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.manifest().num_classes()
    }

    /// Row indices of one split.
    pub fn split(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.rows[i].split == split).collect()
    }

    pub fn label(&self, i: usize) -> usize {
        self.rows[i].class_id
    }
}

/// Writes `clouds/*.pcld` and `manifest.tsv` under `dir`.
pub fn build_dataset(spec: &DatasetSpec, dir: &Path) -> Result<Manifest, DataError> {
    let data = Dataset::generate(spec)?;
    let cdir = dir.join("clouds");
    fs::create_dir_all(&cdir).map_err(|e| DataError::io(&cdir, e))?;
    for (row, cloud) in data.rows.iter().zip(&data.clouds) {
        let path = dir.join(&row.path);
        fs::write(&path, encode_pcld(cloud)).map_err(|e| DataError::io(&path, e))?;
    }
    let manifest = data.manifest();
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, manifest.render()).map_err(|e| DataError::io(&mpath, e))?;
    Ok(manifest)
}

/// Support and query row indices of one few-shot episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    /// Original class ids; episode label `j` means `classes[j]`.
    pub classes: Vec<usize>,
    pub support: Vec<usize>,
    pub query: Vec<usize>,
}

impl Episode {
    /// Episode-local label of a row's class.
    pub fn local_label(&self, class_id: usize) -> Option<usize> {
        self.classes.iter().position(|&c| c == class_id)
    }
}

/// Samples `n_way` classes without replacement, then `m_shot` supports and
/// `q` queries per class, disjoint, from the whole manifest.
pub fn few_shot_split(manifest: &Manifest, n_way: usize, m_shot: usize, q: usize, seed: u64) -> Result<Episode, DataError> {
    let c = manifest.num_classes();
    if n_way == 0 || n_way > c {
        return Err(DataError::Insufficient(format!("{n_way}-way episode from {c} classes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<usize> = rand::seq::index::sample(&mut rng, c, n_way).into_vec();
    classes.sort_unstable();
    let mut support = Vec::with_capacity(n_way * m_shot);
    let mut query = Vec::with_capacity(n_way * q);
    for &cls in &classes {
        let mut rows: Vec<usize> = (0..manifest.rows.len()).filter(|&i| manifest.rows[i].class_id == cls).collect();
        if rows.len() < m_shot + q {
            return Err(DataError::Insufficient(format!(
                "class {cls} has {} samples, episode needs {}",
                rows.len(),
                m_shot + q
            )));
        }
        rows.shuffle(&mut rng);
        support.extend_from_slice(&rows[..m_shot]);
        query.extend_from_slice(&rows[m_shot..m_shot + q]);
    }
    Ok(Episode { classes, support, query })
}
