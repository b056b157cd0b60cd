//! Paired motion datasets and their text file format.
//!
//! ```text
//! # free-form comment lines (provenance written by tools)
//! format chainmap-dataset 1
//! agent_a <name> <encoding> <width>
//! agent_b <name> <encoding> <width>
//! provenance seed=<u64> leader=<name> scale=<f64> waypoints=<n> mimic_step=<f64> mimic_max_iters=<n> mimic_tolerance=<f64> noise_a=<f64> noise_b=<f64> noise_seed=<u64|none>
//! samples <n>
//! <a_1> <a_2> ... | <b_1> <b_2> ...
//! ```
//!
//! Values use Rust's shortest round-trip decimal form, so a written dataset
//! reads back bit-identical.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::{AgentModel, FeatureEncoding};

use super::MimicConfig;

const FORMAT_TAG: &str = "chainmap-dataset";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSide {
    pub name: String,
    pub encoding: FeatureEncoding,
    pub width: usize,
}

impl AgentSide {
    pub fn of(agent: &AgentModel) -> Self {
        AgentSide {
            name: agent.name().to_string(),
            encoding: agent.feature_encoding(),
            width: agent.feature_width(),
        }
    }

    /// Checks that `agent` is the agent this side was recorded for.
    pub fn check(&self, agent: &AgentModel) -> Result<()> {
        if self.name != agent.name()
            || self.encoding != agent.feature_encoding()
            || self.width != agent.feature_width()
        {
            return Err(Error::invalid(format!(
                "dataset side `{} {} {}` does not match agent `{} {} {}`",
                self.name,
                self.encoding,
                self.width,
                agent.name(),
                agent.feature_encoding(),
                agent.feature_width()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub leader: String,
    pub scale: f64,
    pub waypoints: usize,
    pub mimic: MimicConfig,
    pub noise_a: f64,
    pub noise_b: f64,
    pub noise_seed: Option<u64>,
}

impl Default for Provenance {
    fn default() -> Self {
        Provenance {
            seed: 0,
            leader: "none".into(),
            scale: 1.0,
            waypoints: 0,
            mimic: MimicConfig::default(),
            noise_a: 0.0,
            noise_b: 0.0,
            noise_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionDataset {
    pub agent_a: AgentSide,
    pub agent_b: AgentSide,
    pub samples: Vec<Sample>,
    pub provenance: Provenance,
}

impl MotionDataset {
    pub fn new(
        agent_a: AgentSide,
        agent_b: AgentSide,
        samples: Vec<Sample>,
        provenance: Provenance,
    ) -> Result<Self> {
        let d = MotionDataset {
            agent_a,
            agent_b,
            samples,
            provenance,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::invalid("dataset has no samples"));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.a.len() != self.agent_a.width || s.b.len() != self.agent_b.width {
                return Err(Error::invalid(format!(
                    "sample {i} has widths ({}, {}), expected ({}, {})",
                    s.a.len(),
                    s.b.len(),
                    self.agent_a.width,
                    self.agent_b.width
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn features_a(&self) -> Vec<&[f64]> {
        self.samples.iter().map(|s| s.a.as_slice()).collect()
    }

    pub fn features_b(&self) -> Vec<&[f64]> {
        self.samples.iter().map(|s| s.b.as_slice()).collect()
    }

    /// The same data with the roles of A and B exchanged.
    pub fn swapped(&self) -> MotionDataset {
        MotionDataset {
            agent_a: self.agent_b.clone(),
            agent_b: self.agent_a.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    a: s.b.clone(),
                    b: s.a.clone(),
                })
                .collect(),
            provenance: Provenance {
                noise_a: self.provenance.noise_b,
                noise_b: self.provenance.noise_a,
                ..self.provenance.clone()
            },
        }
    }

    /// Subset by sample index, preserving the given order.
    pub fn subset(&self, indices: &[usize]) -> MotionDataset {
        MotionDataset {
            agent_a: self.agent_a.clone(),
            agent_b: self.agent_b.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn check_agents(&self, a: &AgentModel, b: &AgentModel) -> Result<()> {
        self.agent_a.check(a)?;
        self.agent_b.check(b)
    }

    /// Writes the dataset, prefixing each of `comments` as a `# ` line.
    pub fn write<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "format {FORMAT_TAG} {FORMAT_VERSION}")?;
        for (tag, side) in [("agent_a", &self.agent_a), ("agent_b", &self.agent_b)] {
            writeln!(w, "{tag} {} {} {}", side.name, side.encoding, side.width)?;
        }
        let p = &self.provenance;
        writeln!(
            w,
            "provenance seed={} leader={} scale={} waypoints={} mimic_step={} mimic_max_iters={} mimic_tolerance={} noise_a={} noise_b={} noise_seed={}",
            p.seed,
            p.leader,
            p.scale,
            p.waypoints,
            p.mimic.step_size,
            p.mimic.max_iters,
            p.mimic.tolerance,
            p.noise_a,
            p.noise_b,
            p.noise_seed.map_or("none".to_string(), |s| s.to_string())
        )?;
        writeln!(w, "samples {}", self.samples.len())?;
        let mut line = String::new();
        for s in &self.samples {
            line.clear();
            push_values(&mut line, &s.a);
            line.push_str(" |");
            if !s.b.is_empty() {
                line.push(' ');
            }
            push_values(&mut line, &s.b);
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, comments: &[String]) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write(&mut w, comments)?;
        w.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !matches!(l, Ok(s) if s.starts_with('#') || s.trim().is_empty()));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(Error::parse(
                    0,
                    format!("unexpected end of file, expected {what}"),
                )),
            }
        };

        let (n, l) = next("format line")?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "format" || parts[1] != FORMAT_TAG {
            return Err(Error::parse(
                n,
                format!("expected `format {FORMAT_TAG} <version>`"),
            ));
        }
        if parts[2] != FORMAT_VERSION.to_string() {
            return Err(Error::parse(
                n,
                format!("unsupported dataset version {}", parts[2]),
            ));
        }
        let agent_a = parse_side(next("agent_a line")?, "agent_a")?;
        let agent_b = parse_side(next("agent_b line")?, "agent_b")?;
        let provenance = parse_provenance(next("provenance line")?)?;
        let (n, l) = next("samples line")?;
        let count: usize = match l.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["samples", c] => c.parse().map_err(|_| Error::parse(n, "bad sample count"))?,
            _ => return Err(Error::parse(n, "expected `samples <n>`")),
        };
        let mut samples = Vec::with_capacity(count);
        for row in 0..count {
            let (n, l) = next(&format!("sample row {row}")).map_err(|_| {
                Error::parse(0, format!("truncated: missing sample row {row} of {count}"))
            })?;
            let (a, b) = l
                .split_once('|')
                .ok_or_else(|| Error::parse(n, format!("sample row {row}: missing `|`")))?;
            let a = parse_values(a, n, row)?;
            let b = parse_values(b, n, row)?;
            if a.len() != agent_a.width || b.len() != agent_b.width {
                return Err(Error::parse(
                    n,
                    format!(
                        "sample row {row}: widths ({}, {}), expected ({}, {})",
                        a.len(),
                        b.len(),
                        agent_a.width,
                        agent_b.width
                    ),
                ));
            }
            samples.push(Sample { a, b });
        }
        if let Some((n, _)) = lines.next() {
            return Err(Error::parse(
                n,
                format!("extra content after {count} samples"),
            ));
        }
        MotionDataset::new(agent_a, agent_b, samples, provenance)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read(std::io::BufReader::new(file))
    }
}

fn push_values(line: &mut String, values: &[f64]) {
    use std::fmt::Write as _;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            line.push(' ');
        }
        write!(line, "{v}").expect("writing to a String");
    }
}

fn parse_values(s: &str, line: usize, row: usize) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::parse(line, format!("sample row {row}: bad number `{t}`")))
        })
        .collect()
}

fn parse_side((n, l): (usize, String), tag: &str) -> Result<AgentSide> {
    match l.split_whitespace().collect::<Vec<_>>().as_slice() {
        [t, name, enc, width] if *t == tag => Ok(AgentSide {
            name: name.to_string(),
            encoding: enc
                .parse()
                .map_err(|e: Error| Error::parse(n, e.to_string()))?,
            width: width
                .parse()
                .map_err(|_| Error::parse(n, format!("bad width `{width}`")))?,
        }),
        _ => Err(Error::parse(
            n,
            format!("expected `{tag} <name> <encoding> <width>`"),
        )),
    }
}

fn parse_provenance((n, l): (usize, String)) -> Result<Provenance> {
    let mut fields = l.split_whitespace();
    if fields.next() != Some("provenance") {
        return Err(Error::parse(n, "expected provenance line"));
    }
    let mut p = Provenance::default();
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(n, format!("bad provenance field `{field}`")))?;
        let bad = || Error::parse(n, format!("bad value for `{key}`: `{value}`"));
        match key {
            "seed" => p.seed = value.parse().map_err(|_| bad())?,
            "leader" => p.leader = value.to_string(),
            "scale" => p.scale = value.parse().map_err(|_| bad())?,
            "waypoints" => p.waypoints = value.parse().map_err(|_| bad())?,
            "mimic_step" => p.mimic.step_size = value.parse().map_err(|_| bad())?,
            "mimic_max_iters" => p.mimic.max_iters = value.parse().map_err(|_| bad())?,
            "mimic_tolerance" => p.mimic.tolerance = value.parse().map_err(|_| bad())?,
            "noise_a" => p.noise_a = value.parse().map_err(|_| bad())?,
            "noise_b" => p.noise_b = value.parse().map_err(|_| bad())?,
            "noise_seed" => {
                p.noise_seed = match value {
                    "none" => None,
                    v => Some(v.parse().map_err(|_| bad())?),
                }
            }
            _ => return Err(Error::parse(n, format!("unknown provenance field `{key}`"))),
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> MotionDataset {
        MotionDataset::new(
            AgentSide {
                name: "a".into(),
                encoding: FeatureEncoding::CartesianKeypoints,
                width: 3,
            },
            AgentSide {
                name: "b".into(),
                encoding: FeatureEncoding::JointAngles,
                width: 2,
            },
            vec![
                Sample {
                    a: vec![0.1, -2.5e-7, 1.0 / 3.0],
                    b: vec![std::f64::consts::PI, -0.0],
                },
                Sample {
                    a: vec![1e300, 5e-324, -1.0],
                    b: vec![0.2, 0.3],
                },
            ],
            Provenance {
                noise_seed: Some(7),
                ..Provenance::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let d = toy();
        let mut buf = Vec::new();
        d.write(&mut buf, &["made by a test".into()]).unwrap();
        let back = MotionDataset::read(buf.as_slice()).unwrap();
        assert_eq!(back, d);
        for (x, y) in back.samples.iter().zip(&d.samples) {
            for (u, v) in x.a.iter().chain(&x.b).zip(y.a.iter().chain(&y.b)) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn truncated_file_names_the_missing_row() {
        let mut buf = Vec::new();
        toy().write(&mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: Vec<&str> = text.lines().collect();
        let truncated = cut[..cut.len() - 1].join("\n");
        let err = MotionDataset::read(truncated.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn malformed_row_reports_its_line() {
        let mut buf = Vec::new();
        toy().write(&mut buf, &["c".into()]).unwrap();
        let text = String::from_utf8(buf)
            .unwrap()
            .replace("0.2 0.3", "0.2 oops");
        match MotionDataset::read(text.as_bytes()).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 8);
                assert!(message.contains("oops"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn swapped_exchanges_sides() {
        let d = toy();
        let s = d.swapped();
        assert_eq!(s.agent_a, d.agent_b);
        assert_eq!(s.samples[1].a, d.samples[1].b);
        assert_eq!(s.swapped(), d);
    }
}
