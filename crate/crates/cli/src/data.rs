use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use fpseg::data::{
    load_catalog, load_database, split_target, Catalog, Domain, FingerprintSample, Manifest,
    TargetProtocol,
};

#[derive(Args, Clone, Debug)]
pub struct DataArgs {
    /// Dataset root holding one directory per database.
    #[arg(long, env = "FPSEG_DATA_ROOT")]
    pub data_root: PathBuf,
    /// Database manifest; defaults to `<data-root>/manifest.toml`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

impl DataArgs {
    pub fn manifest_path(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.data_root.join("manifest.toml"))
    }

    pub fn catalog(&self) -> Result<Catalog> {
        let path = self.manifest_path();
        let manifest = Manifest::from_path(&path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let catalog = load_catalog(&self.data_root, &manifest)?;
        for w in &catalog.warnings {
            log::warn!("{}: {}", w.database, w.message);
        }
        Ok(catalog)
    }
}

/// Names of the requested databases of one domain; all of them when
/// `requested` is empty.
pub fn select(catalog: &Catalog, domain: Domain, requested: &[String]) -> Result<Vec<String>> {
    if requested.is_empty() {
        return Ok(catalog.by_domain(domain).map(|e| e.name.clone()).collect());
    }
    for name in requested {
        let Some(entry) = catalog.get(name) else {
            let known: Vec<&str> = catalog.entries.iter().map(|e| e.name.as_str()).collect();
            bail!("unknown database `{name}`; the catalog lists {known:?}");
        };
        if entry.domain != domain {
            bail!("database `{name}` is not a {domain:?} database");
        }
    }
    Ok(requested.to_vec())
}

pub fn load(catalog: &Catalog, names: &[String]) -> Result<Vec<FingerprintSample>> {
    let mut out = Vec::new();
    for name in names {
        let entry = catalog
            .get(name)
            .with_context(|| format!("unknown database `{name}`"))?;
        let samples = load_database(entry).with_context(|| format!("loading database {name}"))?;
        log::info!("{name}: {} images", samples.len());
        out.extend(samples);
    }
    Ok(out)
}

/// Target samples split into the adaptation and evaluation halves.
pub fn load_target(
    catalog: &Catalog,
    names: &[String],
    protocol: TargetProtocol,
) -> Result<(Vec<FingerprintSample>, Vec<FingerprintSample>)> {
    let (mut adapt, mut eval) = (Vec::new(), Vec::new());
    for name in names {
        let (a, e) = split_target(&load(catalog, std::slice::from_ref(name))?, protocol);
        adapt.extend(a);
        eval.extend(e);
    }
    Ok((adapt, eval))
}
