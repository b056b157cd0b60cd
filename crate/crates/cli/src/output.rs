//! Provenance headers, input loading with digests, and output files.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use chainmap::datagen::MotionDataset;
use chainmap::fixture;
use chainmap::kinematics::AgentModel;
use chainmap::syda::MappingModel;
use chainmap::transferability::FleetGraph;
use sha2::{Digest, Sha256};

/// Prefix selecting a built-in agent instead of a spec file.
pub const FIXTURE_PREFIX: &str = "fixture:";

pub fn fixture_agent(name: &str) -> Result<AgentModel> {
    Ok(match name {
        "small_humanoid" => fixture::small_humanoid(),
        "large_humanoid" => fixture::large_humanoid(),
        "robot_arm" => fixture::robot_arm(),
        other => bail!(
            "unknown fixture agent `{other}` (expected small_humanoid, large_humanoid or robot_arm)"
        ),
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        write!(s, "{b:02x}").expect("writing to a String");
    }
    s
}

/// Shared state of one command: the seed, the output directory and the
/// provenance lines written at the top of every output file.
#[derive(Debug)]
pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
    command: String,
    inputs: Vec<String>,
}

impl Context {
    pub fn new(seed: u64, out_dir: PathBuf, args: &[String]) -> Result<Self> {
        std::fs::create_dir_all(&out_dir)
            .with_context(|| format!("creating output directory {}", out_dir.display()))?;
        Ok(Context {
            seed,
            out_dir,
            command: args.join(" "),
            inputs: Vec::new(),
        })
    }

    /// Header lines, without the leading `# `.
    pub fn provenance(&self) -> Vec<String> {
        let mut lines = vec![
            format!("chainmap {}", env!("CARGO_PKG_VERSION")),
            format!("command: chainmap {}", self.command),
            format!("seed: {}", self.seed),
        ];
        lines.extend(self.inputs.iter().map(|i| format!("input: {i}")));
        lines
    }

    fn record(&mut self, label: &str, bytes: &[u8]) {
        self.inputs
            .push(format!("{label} sha256={}", sha256_hex(bytes)));
    }

    /// Reads a file and records its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<String> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.record(&path.display().to_string(), text.as_bytes());
        Ok(text)
    }

    /// Loads an agent from a JSON spec file or `fixture:<name>`.
    pub fn agent(&mut self, reference: &str) -> Result<AgentModel> {
        if let Some(name) = reference.strip_prefix(FIXTURE_PREFIX) {
            let agent = fixture_agent(name)?;
            self.record(reference, agent.to_json().as_bytes());
            return Ok(agent);
        }
        let path = Path::new(reference);
        let text = self.read_input(path)?;
        AgentModel::from_json(&text).with_context(|| format!("agent spec {}", path.display()))
    }

    pub fn dataset(&mut self, path: &Path) -> Result<MotionDataset> {
        let text = self.read_input(path)?;
        MotionDataset::read(text.as_bytes()).with_context(|| format!("dataset {}", path.display()))
    }

    pub fn model(&mut self, path: &Path) -> Result<MappingModel> {
        let text = self.read_input(path)?;
        MappingModel::read(text.as_bytes()).with_context(|| format!("model {}", path.display()))
    }

    pub fn fleet(&mut self, path: &Path) -> Result<FleetGraph> {
        let text = self.read_input(path)?;
        FleetGraph::from_json(&text).with_context(|| format!("fleet {}", path.display()))
    }

    pub fn out_path(&self, name: &Path) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Writes `body` to `name` in the output directory after the provenance
    /// header as `# ` lines.
    pub fn write_text(
        &self,
        name: &Path,
        body: impl FnOnce(&mut Vec<u8>) -> Result<()>,
    ) -> Result<PathBuf> {
        let mut buf = Vec::new();
        for line in self.provenance() {
            writeln!(buf, "# {line}")?;
        }
        body(&mut buf)?;
        let path = self.out_path(name);
        std::fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn save_dataset(&self, name: &Path, dataset: &MotionDataset) -> Result<PathBuf> {
        let path = self.out_path(name);
        dataset.save(&path, &self.provenance())?;
        Ok(path)
    }

    pub fn save_model(&self, name: &Path, model: &MappingModel) -> Result<PathBuf> {
        let path = self.out_path(name);
        model.save(&path, &self.provenance())?;
        Ok(path)
    }
}

/// Looks an agent up by name among loaded agents.
pub fn find_agent<'a>(agents: &'a [AgentModel], name: &str) -> Result<&'a AgentModel> {
    agents
        .iter()
        .find(|a| a.name() == name)
        .with_context(|| format!("no agent named `{name}` was given (use --agent)"))
}

/// Writes feature rows as CSV with columns `sample,f0,f1,...`.
pub fn write_features_csv(w: &mut Vec<u8>, rows: &[Vec<f64>]) -> Result<()> {
    let width = rows.first().map_or(0, Vec::len);
    let mut header = String::from("sample");
    for i in 0..width {
        write!(header, ",f{i}")?;
    }
    writeln!(w, "{header}")?;
    for (i, r) in rows.iter().enumerate() {
        let mut line = i.to_string();
        for v in r {
            write!(line, ",{v}")?;
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}
