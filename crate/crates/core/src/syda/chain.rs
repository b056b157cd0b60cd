use crate::error::{ensure_width, Error, Result};

use super::{DirectModel, MappingModel, SydaModel};

/// One directed mapping stage from a source agent's features to a target's.
pub trait FeatureMap {
    fn source(&self) -> &str;
    fn target(&self) -> &str;
    fn input_width(&self) -> usize;
    fn output_width(&self) -> usize;
    fn map(&self, features: &[f64]) -> Result<Vec<f64>>;
}

/// A dual-autoencoder used in one of its two directions.
#[derive(Debug, Clone, Copy)]
pub struct SydaStage<'a> {
    pub model: &'a SydaModel,
    pub reversed: bool,
}

impl SydaModel {
    pub fn forward(&self) -> SydaStage<'_> {
        SydaStage {
            model: self,
            reversed: false,
        }
    }

    pub fn backward(&self) -> SydaStage<'_> {
        SydaStage {
            model: self,
            reversed: true,
        }
    }

    /// The direction of this model that maps `from` to `to`, if any.
    pub fn stage(&self, from: &str, to: &str) -> Option<SydaStage<'_>> {
        if self.agent_a == from && self.agent_b == to {
            Some(self.forward())
        } else if self.agent_b == from && self.agent_a == to {
            Some(self.backward())
        } else {
            None
        }
    }
}

impl FeatureMap for SydaStage<'_> {
    fn source(&self) -> &str {
        if self.reversed {
            &self.model.agent_b
        } else {
            &self.model.agent_a
        }
    }

    fn target(&self) -> &str {
        if self.reversed {
            &self.model.agent_a
        } else {
            &self.model.agent_b
        }
    }

    fn input_width(&self) -> usize {
        if self.reversed {
            self.model.width_b()
        } else {
            self.model.width_a()
        }
    }

    fn output_width(&self) -> usize {
        if self.reversed {
            self.model.width_a()
        } else {
            self.model.width_b()
        }
    }

    fn map(&self, features: &[f64]) -> Result<Vec<f64>> {
        if self.reversed {
            self.model.map_backward(features)
        } else {
            self.model.map_forward(features)
        }
    }
}

impl FeatureMap for DirectModel {
    fn source(&self) -> &str {
        &self.agent_a
    }

    fn target(&self) -> &str {
        &self.agent_b
    }

    fn input_width(&self) -> usize {
        self.width_a()
    }

    fn output_width(&self) -> usize {
        self.width_b()
    }

    fn map(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.map_forward(features)
    }
}

impl MappingModel {
    /// The stage mapping `from` to `to`. Direct models only map forward.
    pub fn stage(&self, from: &str, to: &str) -> Result<Box<dyn FeatureMap + '_>> {
        let found: Option<Box<dyn FeatureMap + '_>> = match self {
            MappingModel::Syda(m) => m.stage(from, to).map(|s| Box::new(s) as _),
            MappingModel::Direct(m) if m.agent_a == from && m.agent_b == to => {
                Some(Box::new(m) as _)
            }
            MappingModel::Direct(_) => None,
        };
        found.ok_or_else(|| {
            let (a, b) = self.agents();
            Error::invalid(format!("model {a}<->{b} cannot map {from} -> {to}"))
        })
    }
}

impl<T: FeatureMap + ?Sized> FeatureMap for &T {
    fn source(&self) -> &str {
        (**self).source()
    }
    fn target(&self) -> &str {
        (**self).target()
    }
    fn input_width(&self) -> usize {
        (**self).input_width()
    }
    fn output_width(&self) -> usize {
        (**self).output_width()
    }
    fn map(&self, features: &[f64]) -> Result<Vec<f64>> {
        (**self).map(features)
    }
}

impl<T: FeatureMap + ?Sized> FeatureMap for Box<T> {
    fn source(&self) -> &str {
        (**self).source()
    }
    fn target(&self) -> &str {
        (**self).target()
    }
    fn input_width(&self) -> usize {
        (**self).input_width()
    }
    fn output_width(&self) -> usize {
        (**self).output_width()
    }
    fn map(&self, features: &[f64]) -> Result<Vec<f64>> {
        (**self).map(features)
    }
}

/// Output of a chain: the final features and the decoded features at every
/// intermediate agent.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub output: Vec<f64>,
    pub intermediates: Vec<Vec<f64>>,
}

/// Checks that consecutive stages meet at the same agent and width.
pub fn check_chain<M: FeatureMap>(stages: &[M]) -> Result<()> {
    if stages.is_empty() {
        return Err(Error::invalid("a chain needs at least one stage"));
    }
    for (i, w) in stages.windows(2).enumerate() {
        if w[0].target() != w[1].source() {
            return Err(Error::invalid(format!(
                "stage {} ends at `{}` but stage {} starts at `{}`",
                i,
                w[0].target(),
                i + 1,
                w[1].source()
            )));
        }
        ensure_width("chain stage", w[0].output_width(), w[1].input_width())?;
    }
    Ok(())
}

/// Maps features through every stage in order, fully decoding at each
/// intermediate agent.
pub fn chain_map<M: FeatureMap>(stages: &[M], features: &[f64]) -> Result<ChainOutput> {
    check_chain(stages)?;
    let mut intermediates = Vec::with_capacity(stages.len() - 1);
    let mut current = stages[0].map(features)?;
    for stage in &stages[1..] {
        let next = stage.map(&current)?;
        intermediates.push(std::mem::replace(&mut current, next));
    }
    Ok(ChainOutput {
        output: current,
        intermediates,
    })
}
