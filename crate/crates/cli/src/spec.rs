//! Where a chain comes from: a file on disk or a built-in generator.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ergokit::generators;
use ergokit::io::{read_chain, ChainFormat};
use ergokit::StochasticMatrix;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum ChainSource {
    File { path: PathBuf, format: Option<ChainFormat> },
    Generator { name: String, params: BTreeMap<String, String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub source: ChainSource,
}

pub const GENERATORS: [&str; 7] =
    ["lazy_hypercube", "top_to_random", "cycle", "two_state", "flip", "uniform", "pagerank"];

/// Parses `k=v,k=v`.
pub fn parse_params(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::InvalidGeneratorParams(format!("expected key=value, got {part:?}")))?;
        if out.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(CliError::InvalidGeneratorParams(format!("parameter {k:?} given twice")));
        }
    }
    Ok(out)
}

struct Params<'a> {
    name: &'a str,
    map: &'a BTreeMap<String, String>,
}

impl Params<'_> {
    fn check_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(CliError::InvalidGeneratorParams(format!(
                "{} does not take parameter {k:?} (expected {})",
                self.name,
                if allowed.is_empty() { "none".to_string() } else { allowed.join(", ") }
            ))),
            None => Ok(()),
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self
            .map
            .get(key)
            .ok_or_else(|| CliError::InvalidGeneratorParams(format!("{} needs parameter {key:?}", self.name)))?;
        raw.parse()
            .map_err(|_| CliError::InvalidGeneratorParams(format!("{}: cannot parse {key}={raw:?}", self.name)))
    }

    fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        if self.map.contains_key(key) {
            self.get(key)
        } else {
            Ok(default)
        }
    }
}

/// Builds a generator chain; parameter range errors become
/// `InvalidGeneratorParams`.
pub fn generate(name: &str, params: &BTreeMap<String, String>) -> Result<StochasticMatrix, CliError> {
    let p = Params { name, map: params };
    let built = match name {
        "lazy_hypercube" => {
            p.check_keys(&["d"])?;
            generators::lazy_hypercube(p.get("d")?)
        }
        "top_to_random" => {
            p.check_keys(&["k"])?;
            generators::top_to_random(p.get("k")?)
        }
        "cycle" => {
            p.check_keys(&["L"])?;
            generators::cycle(p.get("L")?)
        }
        "two_state" => {
            p.check_keys(&["p", "q"])?;
            generators::two_state(p.get("p")?, p.get("q")?)
        }
        "flip" => {
            p.check_keys(&[])?;
            generators::flip()
        }
        "uniform" => {
            p.check_keys(&["n"])?;
            generators::uniform(p.get("n")?)
        }
        "pagerank" => {
            p.check_keys(&["edges", "damping"])?;
            let path: PathBuf = p.get("edges")?;
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let edges = generators::parse_edge_list(&text).map_err(|e| CliError::Parse(e.to_string()))?;
            generators::pagerank(&edges, p.get_or("damping", 0.85)?)
        }
        other => {
            return Err(CliError::InvalidGeneratorParams(format!(
                "unknown generator {other:?} (expected one of {})",
                GENERATORS.join(", ")
            )))
        }
    };
    built.map_err(|e| CliError::InvalidGeneratorParams(e.to_string()))
}

impl ChainSpec {
    pub fn file(path: impl Into<PathBuf>, format: Option<ChainFormat>) -> Self {
        Self { source: ChainSource::File { path: path.into(), format } }
    }

    pub fn generator(name: &str, params: &str) -> Result<Self, CliError> {
        Ok(Self { source: ChainSource::Generator { name: name.to_string(), params: parse_params(params)? } })
    }

    /// Human-readable identifier, e.g. `two_state(p=0.2,q=0.3)`.
    pub fn id(&self) -> String {
        match &self.source {
            ChainSource::File { path, .. } => path.display().to_string(),
            ChainSource::Generator { name, params } => {
                let args: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                format!("{name}({})", args.join(","))
            }
        }
    }

    pub fn resolve(&self) -> Result<StochasticMatrix, CliError> {
        match &self.source {
            ChainSource::File { path, format } => load(path, *format),
            ChainSource::Generator { name, params } => generate(name, params),
        }
    }
}

fn load(path: &Path, format: Option<ChainFormat>) -> Result<StochasticMatrix, CliError> {
    if !path.exists() {
        return Err(CliError::FileNotFound(path.display().to_string()));
    }
    read_chain(path, format).map_err(|e| match e {
        ergokit::Error::Io(m) => CliError::Io(m),
        other => CliError::Parse(other.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_parse() {
        let m = parse_params("p=0.2, q=0.3").unwrap();
        assert_eq!(m["p"], "0.2");
        assert_eq!(m["q"], "0.3");
        assert!(parse_params("").unwrap().is_empty());
        assert!(parse_params("p").is_err());
        assert!(parse_params("p=1,p=2").is_err());
    }

    #[test]
    fn generator_dispatch() {
        let spec = ChainSpec::generator("two_state", "p=0.2,q=0.3").unwrap();
        assert_eq!(spec.id(), "two_state(p=0.2,q=0.3)");
        assert_eq!(spec.resolve().unwrap().get(0, 1), 0.2);
        let cube = ChainSpec::generator("lazy_hypercube", "d=1").unwrap().resolve().unwrap();
        assert_eq!(cube.to_rows(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        for (name, params) in [
            ("lazy_hypercube", "d=13"),
            ("top_to_random", "k=6"),
            ("cycle", "L=1"),
            ("two_state", "p=0,q=0.5"),
            ("two_state", "p=0.5"),
            ("flip", "x=1"),
            ("nope", ""),
        ] {
            let err = ChainSpec::generator(name, params).unwrap().resolve().unwrap_err();
            assert!(matches!(err, CliError::InvalidGeneratorParams(_)), "{name} {params}: {err:?}");
        }
        assert!(matches!(
            ChainSpec::file("/definitely/missing.json", None).resolve(),
            Err(CliError::FileNotFound(_))
        ));
    }
}
