use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::MotionDataset;
use crate::derive_seed;
use crate::error::{ensure_width, Error, Result};
use crate::neuralnet::{
    adam_step, init_network, l1_loss_and_grad, stack_specs, AdamState, Gradients, NetworkParams,
    TrainConfig,
};
use crate::textio::{parse_num, Lines};

/// Standard deviations below this are floored and reported.
pub const STD_FLOOR: f64 = 1e-8;

const SYDA_TAG: &str = "chainmap-syda";
const DIRECT_TAG: &str = "chainmap-direct";
const MODEL_VERSION: u32 = 1;

/// Per-feature affine standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits mean and population std per feature. Returns the indices of
    /// features whose std was floored at [`STD_FLOOR`].
    pub fn fit(rows: &[&[f64]]) -> Result<(Self, Vec<usize>)> {
        let first = rows
            .first()
            .ok_or_else(|| Error::invalid("cannot standardize an empty set"))?;
        let width = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            ensure_width("standardizer row", width, r.len())?;
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut floored = Vec::new();
        let std = var
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let sd = (s / n).sqrt();
                if sd < STD_FLOOR {
                    floored.push(i);
                    STD_FLOOR
                } else {
                    sd
                }
            })
            .collect();
        Ok((Standardizer { mean, std }, floored))
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn destandardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}

/// Encoder/decoder layer widths.
///
/// Each encoder tapers geometrically from its feature width to the latent
/// width over `hidden_layers` tanh layers; decoders mirror their encoder.
/// `hidden_widths`, when set, replaces the taper for both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub hidden_layers: usize,
    pub latent_width: Option<usize>,
    pub hidden_widths: Option<Vec<usize>>,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            hidden_layers: 2,
            latent_width: None,
            hidden_widths: None,
        }
    }
}

impl Architecture {
    /// Latent width for a pair: the configured value, or a quarter of the
    /// narrower side rounded up. Must be narrower than both sides.
    pub fn latent_for(&self, width_a: usize, width_b: usize) -> Result<usize> {
        let narrow = width_a.min(width_b);
        let latent = self.latent_width.unwrap_or(narrow.div_ceil(4));
        if latent == 0 || latent >= narrow {
            return Err(Error::invalid(format!(
                "latent width {latent} must be in [1, {narrow})"
            )));
        }
        Ok(latent)
    }

    pub fn encoder_widths(&self, feature: usize, latent: usize) -> Vec<usize> {
        let mut widths = vec![feature];
        match &self.hidden_widths {
            Some(h) => widths.extend(h),
            None => {
                let steps = self.hidden_layers + 1;
                let ratio = latent as f64 / feature as f64;
                for k in 1..steps {
                    let w = feature as f64 * ratio.powf(k as f64 / steps as f64);
                    widths.push((w.round() as usize).max(latent));
                }
            }
        }
        widths.push(latent);
        widths
    }

    pub fn decoder_widths(&self, feature: usize, latent: usize) -> Vec<usize> {
        let mut w = self.encoder_widths(feature, latent);
        w.reverse();
        w
    }
}

/// Mean training losses per epoch, in standardized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub l_a: f64,
    pub l_b: f64,
    pub l_latent: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossReport {
    pub epochs: Vec<EpochLoss>,
    /// Features of side A whose std was floored.
    pub floored_a: Vec<usize>,
    pub floored_b: Vec<usize>,
}

/// Dual autoencoder: one encoder/decoder pair per agent sharing a latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct SydaModel {
    pub agent_a: String,
    pub agent_b: String,
    pub latent_width: usize,
    pub norm_a: Standardizer,
    pub norm_b: Standardizer,
    pub encoder_a: NetworkParams,
    pub decoder_a: NetworkParams,
    pub encoder_b: NetworkParams,
    pub decoder_b: NetworkParams,
}

/// Baseline mapping A-features straight to B-features.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectModel {
    pub agent_a: String,
    pub agent_b: String,
    pub norm_a: Standardizer,
    pub norm_b: Standardizer,
    pub net: NetworkParams,
}

/// Per-sample dual-autoencoder loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SydaLoss {
    pub l_a: f64,
    pub l_b: f64,
    pub l_latent: f64,
}

impl SydaLoss {
    pub fn total(&self, latent_weight: f64) -> f64 {
        self.l_a + self.l_b + latent_weight * self.l_latent
    }
}

/// The four networks of a dual autoencoder, in the order
/// encoder A, decoder A, encoder B, decoder B.
pub type DualNets = [NetworkParams; 4];

/// Loss of one standardized sample pair and its gradients, accumulated into
/// `grads` (same order as `nets`).
pub fn syda_loss_and_grads(
    nets: &DualNets,
    xa: &[f64],
    xb: &[f64],
    latent_weight: f64,
    grads: &mut [Gradients; 4],
) -> Result<SydaLoss> {
    let [enc_a, dec_a, enc_b, dec_b] = nets;
    let ta = enc_a.forward(xa)?;
    let tb = enc_b.forward(xb)?;
    let ra = dec_a.forward(ta.output())?;
    let rb = dec_b.forward(tb.output())?;
    let (l_a, ga) = l1_loss_and_grad(ra.output(), xa)?;
    let (l_b, gb) = l1_loss_and_grad(rb.output(), xb)?;
    let (l_latent, gz) = l1_loss_and_grad(ta.output(), tb.output())?;

    let [g_enc_a, g_dec_a, g_enc_b, g_dec_b] = grads;
    let mut dza = dec_a.backward_into(&ra, &ga, g_dec_a)?;
    let mut dzb = dec_b.backward_into(&rb, &gb, g_dec_b)?;
    for ((da, db), g) in dza.iter_mut().zip(dzb.iter_mut()).zip(&gz) {
        *da += latent_weight * g;
        *db -= latent_weight * g;
    }
    enc_a.backward_into(&ta, &dza, g_enc_a)?;
    enc_b.backward_into(&tb, &dzb, g_enc_b)?;
    Ok(SydaLoss { l_a, l_b, l_latent })
}

/// L1 loss of a direct stack on one standardized pair, accumulated into `grads`.
pub fn direct_loss_and_grads(
    net: &NetworkParams,
    xa: &[f64],
    xb: &[f64],
    grads: &mut Gradients,
) -> Result<f64> {
    let trace = net.forward(xa)?;
    let (loss, g) = l1_loss_and_grad(trace.output(), xb)?;
    net.backward_into(&trace, &g, grads)?;
    Ok(loss)
}

struct Prepared {
    norm_a: Standardizer,
    norm_b: Standardizer,
    xa: Vec<Vec<f64>>,
    xb: Vec<Vec<f64>>,
    floored_a: Vec<usize>,
    floored_b: Vec<usize>,
}

fn prepare(dataset: &MotionDataset, config: &TrainConfig) -> Result<Prepared> {
    config.validate()?;
    dataset.validate()?;
    let (norm_a, floored_a) = Standardizer::fit(&dataset.features_a())?;
    let (norm_b, floored_b) = Standardizer::fit(&dataset.features_b())?;
    let xa = dataset
        .samples
        .iter()
        .map(|s| norm_a.standardize(&s.a))
        .collect();
    let xb = dataset
        .samples
        .iter()
        .map(|s| norm_b.standardize(&s.b))
        .collect();
    Ok(Prepared {
        norm_a,
        norm_b,
        xa,
        xb,
        floored_a,
        floored_b,
    })
}

fn init_dual(
    arch: &Architecture,
    width_a: usize,
    width_b: usize,
    seed: u64,
) -> Result<(usize, DualNets)> {
    let latent = arch.latent_for(width_a, width_b)?;
    let nets = [
        init_network(
            &stack_specs(&arch.encoder_widths(width_a, latent)),
            derive_seed(seed, 0),
        )?,
        init_network(
            &stack_specs(&arch.decoder_widths(width_a, latent)),
            derive_seed(seed, 1),
        )?,
        init_network(
            &stack_specs(&arch.encoder_widths(width_b, latent)),
            derive_seed(seed, 2),
        )?,
        init_network(
            &stack_specs(&arch.decoder_widths(width_b, latent)),
            derive_seed(seed, 3),
        )?,
    ];
    Ok((latent, nets))
}

/// Minibatch order for every epoch, from one seeded generator.
struct Batches {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    batch: usize,
}

impl Batches {
    fn new(n: usize, config: &TrainConfig) -> Self {
        Batches {
            rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 100)),
            order: (0..n).collect(),
            batch: config.batch_size,
        }
    }

    fn shuffle(&mut self) -> std::slice::Chunks<'_, usize> {
        self.order.shuffle(&mut self.rng);
        self.order.chunks(self.batch)
    }
}

/// Trains both autoencoders together on `l_a + l_b + λ l_latent`.
pub fn train_syda(
    dataset: &MotionDataset,
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<(SydaModel, LossReport)> {
    let p = prepare(dataset, config)?;
    let (latent, mut nets) = init_dual(
        arch,
        dataset.agent_a.width,
        dataset.agent_b.width,
        config.seed,
    )?;
    let mut states: Vec<AdamState> = nets.iter().map(AdamState::new).collect();
    let mut grads: [Gradients; 4] = std::array::from_fn(|i| nets[i].zero_gradients());
    let mut batches = Batches::new(dataset.len(), config);
    let mut report = LossReport {
        floored_a: p.floored_a.clone(),
        floored_b: p.floored_b.clone(),
        ..Default::default()
    };
    let lambda = config.latent_loss_weight;
    for _ in 0..config.epochs {
        let mut sum = [0.0; 3];
        for batch in batches.shuffle() {
            grads.iter_mut().for_each(Gradients::fill_zero);
            for &i in batch {
                let l = syda_loss_and_grads(&nets, &p.xa[i], &p.xb[i], lambda, &mut grads)?;
                sum[0] += l.l_a;
                sum[1] += l.l_b;
                sum[2] += l.l_latent;
            }
            let scale = 1.0 / batch.len() as f64;
            for ((net, g), state) in nets.iter_mut().zip(grads.iter_mut()).zip(&mut states) {
                g.scale(scale);
                adam_step(net, g, state, config)?;
            }
        }
        let n = dataset.len() as f64;
        let (l_a, l_b, l_latent) = (sum[0] / n, sum[1] / n, sum[2] / n);
        report.epochs.push(EpochLoss {
            l_a,
            l_b,
            l_latent,
            total: l_a + l_b + lambda * l_latent,
        });
    }
    let [encoder_a, decoder_a, encoder_b, decoder_b] = nets;
    let model = SydaModel {
        agent_a: dataset.agent_a.name.clone(),
        agent_b: dataset.agent_b.name.clone(),
        latent_width: latent,
        norm_a: p.norm_a,
        norm_b: p.norm_b,
        encoder_a,
        decoder_a,
        encoder_b,
        decoder_b,
    };
    Ok((model, report))
}

/// Untrained direct stack: the dual autoencoder's A encoder followed by its
/// B decoder, with the same initial weights for a given seed.
pub fn init_direct_net(
    arch: &Architecture,
    width_a: usize,
    width_b: usize,
    seed: u64,
) -> Result<NetworkParams> {
    let (_, [enc_a, _, _, dec_b]) = init_dual(arch, width_a, width_b, seed)?;
    enc_a.then(&dec_b)
}

/// Trains the direct baseline on the L1 loss from predicted to true B-features.
/// Epoch losses are reported in `l_b` and `total`.
pub fn train_direct(
    dataset: &MotionDataset,
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<(DirectModel, LossReport)> {
    let p = prepare(dataset, config)?;
    let mut net = init_direct_net(
        arch,
        dataset.agent_a.width,
        dataset.agent_b.width,
        config.seed,
    )?;
    let mut state = AdamState::new(&net);
    let mut grads = net.zero_gradients();
    let mut batches = Batches::new(dataset.len(), config);
    let mut report = LossReport {
        floored_a: p.floored_a.clone(),
        floored_b: p.floored_b.clone(),
        ..Default::default()
    };
    for _ in 0..config.epochs {
        let mut sum = 0.0;
        for batch in batches.shuffle() {
            grads.fill_zero();
            for &i in batch {
                sum += direct_loss_and_grads(&net, &p.xa[i], &p.xb[i], &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut net, &grads, &mut state, config)?;
        }
        let loss = sum / dataset.len() as f64;
        report.epochs.push(EpochLoss {
            l_a: 0.0,
            l_b: loss,
            l_latent: 0.0,
            total: loss,
        });
    }
    let model = DirectModel {
        agent_a: dataset.agent_a.name.clone(),
        agent_b: dataset.agent_b.name.clone(),
        norm_a: p.norm_a,
        norm_b: p.norm_b,
        net,
    };
    Ok((model, report))
}

fn map_through(
    from: &Standardizer,
    encoder: &NetworkParams,
    decoder: &NetworkParams,
    to: &Standardizer,
    x: &[f64],
) -> Result<Vec<f64>> {
    ensure_width("mapped features", from.width(), x.len())?;
    let z = encoder.predict(&from.standardize(x))?;
    Ok(to.destandardize(&decoder.predict(&z)?))
}

impl SydaModel {
    pub fn width_a(&self) -> usize {
        self.norm_a.width()
    }

    pub fn width_b(&self) -> usize {
        self.norm_b.width()
    }

    /// A-features to B-features through the shared latent space.
    pub fn map_forward(&self, features_a: &[f64]) -> Result<Vec<f64>> {
        map_through(
            &self.norm_a,
            &self.encoder_a,
            &self.decoder_b,
            &self.norm_b,
            features_a,
        )
    }

    /// B-features to A-features with the same trained model.
    pub fn map_backward(&self, features_b: &[f64]) -> Result<Vec<f64>> {
        map_through(
            &self.norm_b,
            &self.encoder_b,
            &self.decoder_a,
            &self.norm_a,
            features_b,
        )
    }

    pub fn nets(&self) -> [&NetworkParams; 4] {
        [
            &self.encoder_a,
            &self.decoder_a,
            &self.encoder_b,
            &self.decoder_b,
        ]
    }

    /// Parameter count of the A-to-B path (encoder A plus decoder B).
    pub fn forward_param_count(&self) -> usize {
        self.encoder_a.param_count() + self.decoder_b.param_count()
    }

    pub fn write<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "format {SYDA_TAG} {MODEL_VERSION}")?;
        writeln!(w, "agent_a {} {}", self.agent_a, self.width_a())?;
        writeln!(w, "agent_b {} {}", self.agent_b, self.width_b())?;
        writeln!(w, "latent {}", self.latent_width)?;
        write_norm(&mut w, "a", &self.norm_a)?;
        write_norm(&mut w, "b", &self.norm_b)?;
        for (tag, net) in ["encoder_a", "decoder_a", "encoder_b", "decoder_b"]
            .iter()
            .zip(self.nets())
        {
            writeln!(w, "{tag}")?;
            net.write_section(&mut w)?;
        }
        Ok(())
    }

    fn read_body<R: BufRead>(lines: &mut Lines<R>) -> Result<Self> {
        let (agent_a, width_a) = read_agent(lines, "agent_a")?;
        let (agent_b, width_b) = read_agent(lines, "agent_b")?;
        let (n, parts) = lines.keyed("latent")?;
        let latent_width: usize = match parts.as_slice() {
            [w] => parse_num(w, n)?,
            _ => return Err(Error::parse(n, "expected `latent <width>`")),
        };
        let norm_a = read_norm(lines, "a", width_a)?;
        let norm_b = read_norm(lines, "b", width_b)?;
        let mut nets = Vec::with_capacity(4);
        for tag in ["encoder_a", "decoder_a", "encoder_b", "decoder_b"] {
            lines.keyed(tag)?;
            nets.push(NetworkParams::read_section(lines)?);
        }
        let [encoder_a, decoder_a, encoder_b, decoder_b]: DualNets =
            nets.try_into().expect("four networks");
        let model = SydaModel {
            agent_a,
            agent_b,
            latent_width,
            norm_a,
            norm_b,
            encoder_a,
            decoder_a,
            encoder_b,
            decoder_b,
        };
        model
            .check_shapes()
            .map_err(|e| Error::parse(lines.line(), e.to_string()))?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let (wa, wb, l) = (self.width_a(), self.width_b(), self.latent_width);
        ensure_width("encoder_a input", wa, self.encoder_a.input_width())?;
        ensure_width("encoder_a output", l, self.encoder_a.output_width())?;
        ensure_width("decoder_a input", l, self.decoder_a.input_width())?;
        ensure_width("decoder_a output", wa, self.decoder_a.output_width())?;
        ensure_width("encoder_b input", wb, self.encoder_b.input_width())?;
        ensure_width("encoder_b output", l, self.encoder_b.output_width())?;
        ensure_width("decoder_b input", l, self.decoder_b.input_width())?;
        ensure_width("decoder_b output", wb, self.decoder_b.output_width())
    }
}

impl DirectModel {
    pub fn width_a(&self) -> usize {
        self.norm_a.width()
    }

    pub fn width_b(&self) -> usize {
        self.norm_b.width()
    }

    pub fn map_forward(&self, features_a: &[f64]) -> Result<Vec<f64>> {
        ensure_width("mapped features", self.width_a(), features_a.len())?;
        let y = self.net.predict(&self.norm_a.standardize(features_a))?;
        Ok(self.norm_b.destandardize(&y))
    }

    pub fn write<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "format {DIRECT_TAG} {MODEL_VERSION}")?;
        writeln!(w, "agent_a {} {}", self.agent_a, self.width_a())?;
        writeln!(w, "agent_b {} {}", self.agent_b, self.width_b())?;
        write_norm(&mut w, "a", &self.norm_a)?;
        write_norm(&mut w, "b", &self.norm_b)?;
        self.net.write_section(&mut w)
    }

    fn read_body<R: BufRead>(lines: &mut Lines<R>) -> Result<Self> {
        let (agent_a, width_a) = read_agent(lines, "agent_a")?;
        let (agent_b, width_b) = read_agent(lines, "agent_b")?;
        let norm_a = read_norm(lines, "a", width_a)?;
        let norm_b = read_norm(lines, "b", width_b)?;
        let net = NetworkParams::read_section(lines)?;
        let line = lines.line();
        ensure_width("direct input", width_a, net.input_width())
            .and_then(|_| ensure_width("direct output", width_b, net.output_width()))
            .map_err(|e| Error::parse(line, e.to_string()))?;
        Ok(DirectModel {
            agent_a,
            agent_b,
            norm_a,
            norm_b,
            net,
        })
    }
}

fn write_norm<W: Write>(w: &mut W, side: &str, norm: &Standardizer) -> Result<()> {
    use crate::textio::join_values;
    writeln!(w, "mean_{side} {}", join_values(&norm.mean))?;
    writeln!(w, "std_{side} {}", join_values(&norm.std))?;
    Ok(())
}

fn read_norm<R: BufRead>(lines: &mut Lines<R>, side: &str, width: usize) -> Result<Standardizer> {
    let mean = lines.keyed_values(&format!("mean_{side}"), width)?;
    let std = lines.keyed_values(&format!("std_{side}"), width)?;
    if std.iter().any(|s| s.is_nan() || *s <= 0.0) {
        return Err(Error::parse(
            lines.line(),
            format!("std_{side} entries must be > 0"),
        ));
    }
    Ok(Standardizer { mean, std })
}

fn read_agent<R: BufRead>(lines: &mut Lines<R>, key: &str) -> Result<(String, usize)> {
    let (n, parts) = lines.keyed(key)?;
    match parts.as_slice() {
        [name, width] => Ok((name.clone(), parse_num(width, n)?)),
        _ => Err(Error::parse(n, format!("expected `{key} <name> <width>`"))),
    }
}

/// A trained mapping model of either kind, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum MappingModel {
    Syda(SydaModel),
    Direct(DirectModel),
}

impl MappingModel {
    pub fn write<W: Write>(&self, w: W, comments: &[String]) -> Result<()> {
        match self {
            MappingModel::Syda(m) => m.write(w, comments),
            MappingModel::Direct(m) => m.write(w, comments),
        }
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = Lines::new(r);
        let (n, l) = lines.next_line("format line")?;
        let model = match l.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["format", tag, v] if *v == MODEL_VERSION.to_string() => match *tag {
                SYDA_TAG => MappingModel::Syda(SydaModel::read_body(&mut lines)?),
                DIRECT_TAG => MappingModel::Direct(DirectModel::read_body(&mut lines)?),
                other => return Err(Error::parse(n, format!("unknown model format `{other}`"))),
            },
            _ => {
                return Err(Error::parse(
                    n,
                    format!("expected `format {SYDA_TAG}|{DIRECT_TAG} {MODEL_VERSION}`"),
                ))
            }
        };
        if let Some((n, _)) = lines.try_next()? {
            return Err(Error::parse(n, "unexpected content after model"));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>, comments: &[String]) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write(&mut w, comments)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read(std::io::BufReader::new(file))
    }

    pub fn agents(&self) -> (&str, &str) {
        match self {
            MappingModel::Syda(m) => (&m.agent_a, &m.agent_b),
            MappingModel::Direct(m) => (&m.agent_a, &m.agent_b),
        }
    }
}
