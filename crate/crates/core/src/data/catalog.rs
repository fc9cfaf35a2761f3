use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_sample, Domain, FingerprintSample, Sensing};
use crate::{Error, Result};

/// One database of the catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatabaseEntry {
    pub name: String,
    pub sensing: Sensing,
    pub domain: Domain,
    /// `(width, height)` in pixels.
    pub native_size: (usize, usize),
    /// Directory holding `images/` and `masks/`.
    pub root: PathBuf,
}

/// A manifest line as written in the TOML file. `domain`, `width`, `height`
/// and `path` may be omitted: the domain follows from the sensing, sizes of
/// the FVC databases are known, and the path defaults to the name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    pub name: String,
    pub sensing: Sensing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, rename = "database")]
    pub databases: Vec<ManifestRow>,
}

/// FVC 2000/2002/2004 databases: name, sensing, `(width, height)`.
const FVC_TABLE: [(&str, Sensing, (usize, usize)); 12] = [
    ("2000DB1", Sensing::Optical, (300, 300)),
    ("2000DB2", Sensing::Capacitive, (256, 364)),
    ("2000DB3", Sensing::Optical, (448, 478)),
    ("2000DB4", Sensing::Synthetic, (240, 320)),
    ("2002DB1", Sensing::Optical, (388, 374)),
    ("2002DB2", Sensing::Optical, (296, 560)),
    ("2002DB3", Sensing::Capacitive, (300, 300)),
    ("2002DB4", Sensing::Synthetic, (288, 384)),
    ("2004DB1", Sensing::Optical, (640, 480)),
    ("2004DB2", Sensing::Optical, (328, 364)),
    ("2004DB3", Sensing::Thermal, (300, 480)),
    ("2004DB4", Sensing::Synthetic, (288, 384)),
];

fn known_size(name: &str) -> Option<(usize, usize)> {
    let key: String = name.chars().filter(|c| !c.is_whitespace()).collect();
    FVC_TABLE
        .iter()
        .find(|(n, _, _)| n.eq_ignore_ascii_case(&key))
        .map(|&(_, _, size)| size)
}

impl Manifest {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// The twelve FVC databases with their sensing technology and size.
    pub fn fvc() -> Self {
        Self {
            databases: FVC_TABLE
                .iter()
                .map(|&(name, sensing, (w, h))| ManifestRow {
                    name: name.to_string(),
                    sensing,
                    domain: Some(Domain::for_sensing(sensing)),
                    width: Some(w),
                    height: Some(h),
                    path: None,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogWarning {
    pub database: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub entries: Vec<DatabaseEntry>,
    pub warnings: Vec<CatalogWarning>,
}

impl Catalog {
    pub fn get(&self, name: &str) -> Option<&DatabaseEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn by_domain(&self, domain: Domain) -> impl Iterator<Item = &DatabaseEntry> {
        self.entries.iter().filter(move |e| e.domain == domain)
    }
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

/// Resolves every manifest row against `root`.
///
/// A missing database directory is an error. A declared size that differs
/// from the first image on disk only produces a warning.
pub fn load_catalog(root: &Path, manifest: &Manifest) -> Result<Catalog> {
    let mut catalog = Catalog::default();
    for row in &manifest.databases {
        let implied = Domain::for_sensing(row.sensing);
        if let Some(d) = row.domain {
            if d != implied {
                return Err(Error::Catalog {
                    database: row.name.clone(),
                    reason: format!(
                        "domain {d:?} contradicts {:?} sensing (only synthetic databases are source)",
                        row.sensing
                    ),
                });
            }
        }
        let native_size = match (row.width, row.height) {
            (Some(w), Some(h)) => (w, h),
            _ => known_size(&row.name).ok_or_else(|| Error::Catalog {
                database: row.name.clone(),
                reason: "width/height missing and not a known FVC database".into(),
            })?,
        };
        if native_size.0 == 0 || native_size.1 == 0 {
            return Err(Error::Catalog {
                database: row.name.clone(),
                reason: "size components must be positive".into(),
            });
        }
        let dir = root.join(row.path.clone().unwrap_or_else(|| PathBuf::from(&row.name)));
        if !dir.is_dir() {
            return Err(Error::Catalog {
                database: row.name.clone(),
                reason: format!("directory {} does not exist", dir.display()),
            });
        }
        let images = dir.join("images");
        if images.is_dir() {
            if let Some(first) = sorted_files(&images)?.first() {
                if let Ok((w, h)) = image::image_dimensions(first) {
                    let on_disk = (w as usize, h as usize);
                    if on_disk != native_size {
                        let message = format!(
                            "manifest declares {}×{} but {} is {}×{}",
                            native_size.0,
                            native_size.1,
                            first.display(),
                            on_disk.0,
                            on_disk.1
                        );
                        log::warn!("{}: {message}", row.name);
                        catalog.warnings.push(CatalogWarning {
                            database: row.name.clone(),
                            message,
                        });
                    }
                }
            }
        }
        catalog.entries.push(DatabaseEntry {
            name: row.name.clone(),
            sensing: row.sensing,
            domain: implied,
            native_size,
            root: dir,
        });
    }
    Ok(catalog)
}

/// Loads every image of a database, pairing masks by file stem.
pub fn load_database(entry: &DatabaseEntry) -> Result<Vec<FingerprintSample>> {
    let images = entry.root.join("images");
    let masks_dir = entry.root.join("masks");
    let masks: BTreeMap<String, PathBuf> = if masks_dir.is_dir() {
        sorted_files(&masks_dir)?
            .into_iter()
            .filter_map(|p| {
                let stem = p.file_stem()?.to_string_lossy().into_owned();
                Some((stem, p))
            })
            .collect()
    } else {
        BTreeMap::new()
    };
    sorted_files(&images)?
        .iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let sample = load_sample(p, masks.get(&stem).map(PathBuf::as_path))?;
            Ok(sample.with_origin(entry.name.clone(), entry.domain))
        })
        .collect()
}

/// Which target images take part in adaptation versus evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetProtocol {
    /// The unlabeled images seen during adaptation are also the test set.
    #[default]
    Transductive,
    /// Alternate images (in id order) go to adaptation and evaluation.
    Split,
}

/// Returns `(adaptation, evaluation)` sets for a target database.
pub fn split_target(
    samples: &[FingerprintSample],
    protocol: TargetProtocol,
) -> (Vec<FingerprintSample>, Vec<FingerprintSample>) {
    match protocol {
        TargetProtocol::Transductive => (samples.to_vec(), samples.to_vec()),
        TargetProtocol::Split => {
            let mut sorted: Vec<_> = samples.to_vec();
            sorted.sort_by(|a, b| a.id.cmp(&b.id));
            let (mut adapt, mut eval) = (Vec::new(), Vec::new());
            for (i, s) in sorted.into_iter().enumerate() {
                if i % 2 == 0 {
                    adapt.push(s);
                } else {
                    eval.push(s);
                }
            }
            (adapt, eval)
        }
    }
}
