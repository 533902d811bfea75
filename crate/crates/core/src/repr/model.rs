use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Feedforward,
    Recurrent,
    Attention,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Feedforward, Family::Recurrent, Family::Attention];

    pub fn name(self) -> &'static str {
        match self {
            Family::Feedforward => "feedforward",
            Family::Recurrent => "recurrent",
            Family::Attention => "attention",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub family: Family,
    pub input_dim: usize,
    pub window: usize,
    #[serde(default = "default_latent")]
    pub latent_dim: usize,
    /// Hidden width of the feedforward and recurrent families.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Model width of the attention family.
    #[serde(default = "default_d_model")]
    pub d_model: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_latent() -> usize {
    64
}
fn default_hidden() -> usize {
    64
}
fn default_d_model() -> usize {
    64
}

impl EncoderSpec {
    pub fn new(family: Family, input_dim: usize, window: usize, latent_dim: usize) -> Self {
        EncoderSpec {
            family,
            input_dim,
            window,
            latent_dim,
            hidden: default_hidden(),
            d_model: default_d_model(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim < 2 {
            return Err(Error::config("latent_dim must be at least 2"));
        }
        if self.input_dim == 0 || self.window == 0 || self.hidden == 0 || self.d_model == 0 {
            return Err(Error::config("encoder dimensions must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Layout {
    Feedforward {
        enc: [usize; 4],
        dec: [usize; 4],
    },
    Recurrent {
        enc: Gru,
        out: [usize; 2],
        init: [usize; 2],
        dec: Gru,
        read: [usize; 2],
    },
    Attention {
        input: [usize; 2],
        qkvo: [usize; 4],
        ffn: [usize; 4],
        proj: [usize; 2],
        dec: [usize; 5],
    },
}

/// Gate weights (input, state, bias) for update, reset and candidate.
#[derive(Debug, Clone, Copy)]
struct Gru {
    update: [usize; 3],
    reset: [usize; 3],
    cand: [usize; 3],
}

struct Builder {
    rng: rng::Rng,
    params: Vec<Array2<f64>>,
    names: Vec<String>,
}

impl Builder {
    fn weight(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        let bound = 1.0 / (rows as f64).sqrt();
        let rng = &mut self.rng;
        let w = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound));
        self.push(name, w)
    }

    fn bias(&mut self, name: &str, cols: usize) -> usize {
        self.push(name, Array2::zeros((1, cols)))
    }

    fn push(&mut self, name: &str, value: Array2<f64>) -> usize {
        self.params.push(value);
        self.names.push(name.to_string());
        self.params.len() - 1
    }

    fn gru(&mut self, prefix: &str, input: usize, hidden: usize) -> Gru {
        let mut gate = |g: &str| {
            [
                self.weight(&format!("{prefix}.{g}.w"), input, hidden),
                self.weight(&format!("{prefix}.{g}.u"), hidden, hidden),
                self.bias(&format!("{prefix}.{g}.b"), hidden),
            ]
        };
        Gru { update: gate("update"), reset: gate("reset"), cand: gate("cand") }
    }
}

/// An encoder/decoder pair whose latent is the window representation.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    spec: EncoderSpec,
    params: Vec<Array2<f64>>,
    names: Vec<String>,
    layout: Layout,
    position: Option<Array2<f64>>,
    frozen: bool,
}

/// Graph handles produced by one forward pass.
pub struct Forward {
    pub input: Var,
    pub latent: Var,
    pub steps: Option<Var>,
    pub recon: Var,
    pub mse: Var,
}

impl Autoencoder {
    pub fn new(spec: EncoderSpec) -> Result<Self> {
        spec.validate()?;
        let mut b = Builder {
            rng: rng::derived(spec.seed, "encoder-init", 0),
            params: Vec::new(),
            names: Vec::new(),
        };
        let (d, t, f, h, dm) = (spec.input_dim, spec.window, spec.latent_dim, spec.hidden, spec.d_model);
        let layout = match spec.family {
            Family::Feedforward => Layout::Feedforward {
                enc: [b.weight("enc.w1", t * d, h), b.bias("enc.b1", h), b.weight("enc.w2", h, f), b.bias("enc.b2", f)],
                dec: [b.weight("dec.w1", f, h), b.bias("dec.b1", h), b.weight("dec.w2", h, t * d), b.bias("dec.b2", t * d)],
            },
            Family::Recurrent => Layout::Recurrent {
                enc: b.gru("enc", d, h),
                out: [b.weight("enc.out.w", h, f), b.bias("enc.out.b", f)],
                init: [b.weight("dec.init.w", f, h), b.bias("dec.init.b", h)],
                dec: b.gru("dec", f, h),
                read: [b.weight("dec.read.w", h, d), b.bias("dec.read.b", d)],
            },
            Family::Attention => Layout::Attention {
                input: [b.weight("enc.in.w", d, dm), b.bias("enc.in.b", dm)],
                qkvo: [
                    b.weight("enc.q", dm, dm),
                    b.weight("enc.k", dm, dm),
                    b.weight("enc.v", dm, dm),
                    b.weight("enc.o", dm, dm),
                ],
                ffn: [b.weight("enc.ffn.w1", dm, dm), b.bias("enc.ffn.b1", dm), b.weight("enc.ffn.w2", dm, dm), b.bias("enc.ffn.b2", dm)],
                proj: [b.weight("enc.proj.w", dm, f), b.bias("enc.proj.b", f)],
                dec: [
                    b.weight("dec.z", f, dm),
                    b.weight("dec.pos", dm, dm),
                    b.bias("dec.b", dm),
                    b.weight("dec.out.w", dm, d),
                    b.bias("dec.out.b", d),
                ],
            },
        };
        let position = (spec.family == Family::Attention).then(|| sinusoidal(t, dm));
        Ok(Autoencoder { spec, params: b.params, names: b.names, layout, position, frozen: false })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Array2<f64>] {
        &self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Mutable parameter access; refused once frozen.
    pub fn params_mut(&mut self) -> Result<&mut [Array2<f64>]> {
        if self.frozen {
            return Err(Error::Frozen(self.param_hash()));
        }
        Ok(&mut self.params)
    }

    pub(crate) fn replace_params(&mut self, params: Vec<Array2<f64>>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape(format!("expected {} parameter tensors, got {}", self.params.len(), params.len())));
        }
        for (i, (new, old)) in params.iter().zip(&self.params).enumerate() {
            if new.dim() != old.dim() {
                return Err(Error::shape(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    self.names[i],
                    new.dim(),
                    old.dim()
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    /// SHA-256 over parameter shapes and little-endian values.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update((p.nrows() as u64).to_le_bytes());
            h.update((p.ncols() as u64).to_le_bytes());
            for v in p.iter() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn check_window(&self, window: &ArrayView2<f64>) -> Result<()> {
        if window.dim() != (self.spec.window, self.spec.input_dim) {
            return Err(Error::shape(format!(
                "window is {}x{}, model expects {}x{}",
                window.nrows(),
                window.ncols(),
                self.spec.window,
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Records the encoder on `tape`, returning the latent and, for the
    /// attention family, the per-step embeddings before pooling.
    pub fn encoder_graph<'p>(&'p self, tape: &mut Tape<'p>, x: Var) -> (Var, Option<Var>) {
        let t = self.spec.window;
        match &self.layout {
            Layout::Feedforward { enc, .. } => {
                let flat = tape.reshape(x, 1, t * self.spec.input_dim);
                let h = dense(tape, flat, enc[0], enc[1]);
                let h = tape.tanh(h);
                (dense(tape, h, enc[2], enc[3]), None)
            }
            Layout::Recurrent { enc, out, .. } => {
                let mut h = tape.leaf(Array2::zeros((1, self.spec.hidden)));
                for step in 0..t {
                    let xt = tape.row(x, step);
                    h = gru_step(tape, enc, xt, h);
                }
                (dense(tape, h, out[0], out[1]), None)
            }
            Layout::Attention { input, qkvo, ffn, proj, .. } => {
                let e = dense(tape, x, input[0], input[1]);
                let pe = tape.leaf(self.position.clone().expect("attention has positions"));
                let e = tape.add(e, pe);
                let [wq, wk, wv, wo] = qkvo.map(|i| tape.param(i));
                let q = tape.matmul(e, wq);
                let k = tape.matmul(e, wk);
                let v = tape.matmul(e, wv);
                let kt = tape.transpose(k);
                let s = tape.matmul(q, kt);
                let s = tape.scale(s, 1.0 / (self.spec.d_model as f64).sqrt());
                let a = tape.softmax_rows(s);
                let av = tape.matmul(a, v);
                let o = tape.matmul(av, wo);
                let h1 = tape.add(e, o);
                let f = dense(tape, h1, ffn[0], ffn[1]);
                let f = tape.tanh(f);
                let f = dense(tape, f, ffn[2], ffn[3]);
                let h2 = tape.add(h1, f);
                let steps = dense(tape, h2, proj[0], proj[1]);
                (tape.mean_rows(steps), Some(steps))
            }
        }
    }

    /// Records the decoder for a 1×F latent, returning a T×d reconstruction.
    pub fn decoder_graph<'p>(&'p self, tape: &mut Tape<'p>, z: Var) -> Var {
        let (t, d) = (self.spec.window, self.spec.input_dim);
        match &self.layout {
            Layout::Feedforward { dec, .. } => {
                let h = dense(tape, z, dec[0], dec[1]);
                let h = tape.tanh(h);
                let out = dense(tape, h, dec[2], dec[3]);
                tape.reshape(out, t, d)
            }
            Layout::Recurrent { init, dec, read, .. } => {
                let h0 = dense(tape, z, init[0], init[1]);
                let mut h = tape.tanh(h0);
                let mut rows = Vec::with_capacity(t);
                for _ in 0..t {
                    h = gru_step(tape, dec, z, h);
                    rows.push(dense(tape, h, read[0], read[1]));
                }
                tape.stack_rows(rows)
            }
            Layout::Attention { dec, .. } => {
                let ones = tape.leaf(Array2::ones((t, 1)));
                let zz = tape.matmul(ones, z);
                let wz = tape.param(dec[0]);
                let a = tape.matmul(zz, wz);
                let pe = tape.leaf(self.position.clone().expect("attention has positions"));
                let wp = tape.param(dec[1]);
                let p = tape.matmul(pe, wp);
                let s = tape.add(a, p);
                let bias = tape.param(dec[2]);
                let s = tape.add_row(s, bias);
                let g = tape.tanh(s);
                dense(tape, g, dec[3], dec[4])
            }
        }
    }

    /// Full autoencoder pass on one window with its reconstruction error.
    pub fn forward<'p>(&'p self, tape: &mut Tape<'p>, window: ArrayView2<f64>) -> Result<Forward> {
        self.check_window(&window)?;
        let input = tape.leaf_view(window);
        let (latent, steps) = self.encoder_graph(tape, input);
        let recon = self.decoder_graph(tape, latent);
        let mse = tape.mse(recon, input);
        Ok(Forward { input, latent, steps, recon, mse })
    }

    pub fn encode(&self, window: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_window(&window)?;
        let mut tape = Tape::new(&self.params);
        let x = tape.leaf_view(window);
        let (z, _) = self.encoder_graph(&mut tape, x);
        Ok(tape.value(z).iter().copied().collect())
    }

    /// Per-step embeddings (T×F) before pooling. Attention family only.
    pub fn step_embeddings(&self, window: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_window(&window)?;
        let mut tape = Tape::new(&self.params);
        let x = tape.leaf_view(window);
        match self.encoder_graph(&mut tape, x) {
            (_, Some(steps)) => Ok(tape.value(steps).clone()),
            _ => Err(Error::config(format!("{} encoder has no per-step embeddings", self.spec.family.name()))),
        }
    }

    pub fn decode(&self, latent: &[f64]) -> Result<Array2<f64>> {
        if latent.len() != self.spec.latent_dim {
            return Err(Error::shape(format!("latent has {} values, model expects {}", latent.len(), self.spec.latent_dim)));
        }
        let mut tape = Tape::new(&self.params);
        let z = tape.leaf(Array2::from_shape_vec((1, latent.len()), latent.to_vec()).expect("row"));
        let out = self.decoder_graph(&mut tape, z);
        Ok(tape.value(out).clone())
    }

    pub fn reconstruct(&self, window: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut tape = Tape::new(&self.params);
        let fwd = self.forward(&mut tape, window)?;
        Ok(tape.value(fwd.recon).clone())
    }
}

fn dense(tape: &mut Tape<'_>, x: Var, w: usize, b: usize) -> Var {
    let w = tape.param(w);
    let b = tape.param(b);
    tape.affine(x, w, b)
}

fn gru_step(tape: &mut Tape<'_>, g: &Gru, x: Var, h: Var) -> Var {
    let gate = |tape: &mut Tape<'_>, p: &[usize; 3], state: Var| {
        let (w, u, b) = (tape.param(p[0]), tape.param(p[1]), tape.param(p[2]));
        let a = tape.matmul(x, w);
        let c = tape.matmul(state, u);
        let s = tape.add(a, c);
        tape.add_row(s, b)
    };
    let zg = gate(tape, &g.update, h);
    let zg = tape.sigmoid(zg);
    let rg = gate(tape, &g.reset, h);
    let rg = tape.sigmoid(rg);
    let rh = tape.mul(rg, h);
    let c = gate(tape, &g.cand, rh);
    let c = tape.tanh(c);
    let delta = tape.sub(c, h);
    let step = tape.mul(zg, delta);
    tape.add(h, step)
}

/// Fixed sinusoidal position table, T×width.
pub fn sinusoidal(steps: usize, width: usize) -> Array2<f64> {
    Array2::from_shape_fn((steps, width), |(pos, i)| {
        let k = (i / 2) as f64 * 2.0;
        let angle = pos as f64 / 10000f64.powf(k / width as f64);
        if i % 2 == 0 { angle.sin() } else { angle.cos() }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(family: Family) -> Autoencoder {
        let mut spec = EncoderSpec::new(family, 3, 4, 3);
        spec.hidden = 4;
        spec.d_model = 4;
        spec.seed = 5;
        Autoencoder::new(spec).unwrap()
    }

    fn random_window(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::seeded(seed);
        Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.0..1.0))
    }

    #[test]
    fn latent_dim_below_two_rejected() {
        assert!(Autoencoder::new(EncoderSpec::new(Family::Feedforward, 3, 4, 1)).is_err());
    }

    #[test]
    fn shapes_and_determinism() {
        let x = random_window(4, 3, 1);
        for family in Family::ALL {
            let a = tiny(family);
            let b = tiny(family);
            assert_eq!(a.param_hash(), b.param_hash());
            let za = a.encode(x.view()).unwrap();
            assert_eq!(za, b.encode(x.view()).unwrap());
            assert_eq!(za.len(), 3);
            assert_eq!(za, a.encode(x.clone().view()).unwrap());
            let r = a.decode(&za).unwrap();
            assert_eq!(r.dim(), (4, 3));
            assert!(r.iter().all(|v| v.is_finite()));
            assert!(a.encode(random_window(5, 3, 1).view()).is_err());
            assert!(a.decode(&[0.0; 2]).is_err());
        }
    }

    #[test]
    fn recurrent_encoder_is_order_sensitive() {
        let a = tiny(Family::Recurrent);
        let x = random_window(4, 3, 9);
        let mut y = x.clone();
        for (dst, src) in [3usize, 2, 1, 0].iter().enumerate() {
            y.row_mut(dst).assign(&x.row(*src));
        }
        let zx = a.encode(x.view()).unwrap();
        let zy = a.encode(y.view()).unwrap();
        assert!(zx.iter().zip(&zy).any(|(p, q)| (p - q).abs() > 1e-9));
    }

    #[test]
    fn attention_exposes_step_embeddings() {
        let a = tiny(Family::Attention);
        let x = random_window(4, 3, 2);
        let steps = a.step_embeddings(x.view()).unwrap();
        assert_eq!(steps.dim(), (4, 3));
        let z = a.encode(x.view()).unwrap();
        for j in 0..3 {
            let m = steps.column(j).mean().unwrap();
            assert!((m - z[j]).abs() < 1e-12);
        }
        assert!(tiny(Family::Recurrent).step_embeddings(x.view()).is_err());
    }

    #[test]
    fn frozen_model_refuses_mutation() {
        let mut a = tiny(Family::Feedforward);
        a.freeze();
        assert!(matches!(a.params_mut(), Err(Error::Frozen(_))));
    }

    #[test]
    fn sinusoid_first_row() {
        let pe = sinusoidal(3, 4);
        assert_eq!(pe.row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert!((pe[[1, 0]] - 1f64.sin()).abs() < 1e-15);
        assert!((pe[[1, 2]] - (1.0f64 / 100.0).sin()).abs() < 1e-15);
    }
}
