use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

/// Written next to every output file. Passing it back through `--config`
/// repeats the run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    /// Every resolved setting, in resolution order.
    pub config: Vec<(String, String)>,
    pub version: String,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: &[(String, String)], seed: u64) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config: config.iter().filter(|(k, _)| k != "seed").cloned().collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::from("# ftn run manifest; rerun with: ftn ");
        s.push_str(&self.subcommand);
        s.push_str(" --config <this file>\n");
        s.push_str(&format!("subcommand={}\n", self.subcommand));
        s.push_str(&format!("version={}\n", self.version));
        s.push_str(&format!("timestamp={}\n", self.timestamp));
        s.push_str(&format!("seed={}\n", self.seed));
        for (k, v) in &self.config {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    pub fn write_beside(&self, out: &Path) -> std::io::Result<PathBuf> {
        let path = manifest_path(out);
        std::fs::write(&path, self.render())?;
        Ok(path)
    }
}

/// `results.csv` gets `results.csv.manifest`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigFile;

    #[test]
    fn manifest_reads_back_as_config() {
        let cfg = vec![("mod".to_string(), "16".to_string()), ("seed".to_string(), "7".to_string())];
        let m = RunManifest::new("ber", &cfg, 7);
        let back = ConfigFile::parse(&m.render()).unwrap();
        assert_eq!(back.subcommand.as_deref(), Some("ber"));
        assert_eq!(back.values.get("mod").map(String::as_str), Some("16"));
        assert_eq!(back.values.get("seed").map(String::as_str), Some("7"));
        assert_eq!(back.values.len(), 2);
        assert_eq!(manifest_path(Path::new("a/b.csv")), PathBuf::from("a/b.csv.manifest"));
    }
}
