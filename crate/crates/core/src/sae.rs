//! Frozen TopK sparse autoencoder: forward pass and evaluation losses.
//!
//! The encoder produces a dense pre-activation `W_enc · h̃ + b_enc`, TopK keeps
//! the `kappa` largest coordinates by signed value (ties go to the lower index)
//! and drops any retained coordinate that is not strictly positive, and the
//! decoder maps the sparse code back to `W_dec · z + b_dec`.
//!
//! Weight file layout (little-endian): magic `SAEW`, `u32 d`, `u32 K`,
//! `u32 kappa`, then `W_enc` (K×d, row-major), `b_enc` (K), `W_dec` (d×K,
//! row-major) and `b_dec` (d), all `f32`. A JSON sidecar holds [`SaeConfig`].

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Exec, Result, SparseVector};

const MAGIC: &[u8; 4] = b"SAEW";

#[derive(Debug, Clone, PartialEq)]
pub struct SaeWeights {
    d: usize,
    k_features: usize,
    /// K×d row-major.
    w_enc: Vec<f64>,
    b_enc: Vec<f64>,
    /// d×K row-major.
    w_dec: Vec<f64>,
    b_dec: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Identity,
    SubtractDecoderBias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeConfig {
    pub kappa: usize,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default = "one")]
    pub lambda_rec: f64,
    #[serde(default)]
    pub lambda_l1: f64,
}

fn one() -> f64 {
    1.0
}

impl SaeConfig {
    pub fn new(kappa: usize) -> Self {
        Self {
            kappa,
            normalization: Normalization::Identity,
            lambda_rec: 1.0,
            lambda_l1: 0.0,
        }
    }

    fn check(&self, k_features: usize) -> Result<()> {
        if self.kappa == 0 {
            return Err(Error::ZeroKappa);
        }
        if self.kappa > k_features {
            return Err(Error::KappaTooLarge {
                kappa: self.kappa,
                dim: k_features,
            });
        }
        if !(self.lambda_rec >= 0.0 && self.lambda_l1 >= 0.0) {
            return Err(Error::WeightFormat("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

impl SaeWeights {
    pub fn new(
        d: usize,
        k_features: usize,
        w_enc: Vec<f64>,
        b_enc: Vec<f64>,
        w_dec: Vec<f64>,
        b_dec: Vec<f64>,
    ) -> Result<Self> {
        if d == 0 || k_features == 0 {
            return Err(Error::WeightFormat("d and K must be positive".into()));
        }
        if k_features > u32::MAX as usize {
            return Err(Error::WeightFormat("K exceeds u32".into()));
        }
        let shapes = [
            ("W_enc", w_enc.len(), k_features * d),
            ("b_enc", b_enc.len(), k_features),
            ("W_dec", w_dec.len(), d * k_features),
            ("b_dec", b_dec.len(), d),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::WeightFormat(format!(
                    "{name} has {got} entries, expected {want}"
                )));
            }
        }
        if !(all_finite(&w_enc) && all_finite(&b_enc) && all_finite(&w_dec) && all_finite(&b_dec)) {
            return Err(Error::WeightFormat("non-finite weight".into()));
        }
        Ok(Self {
            d,
            k_features,
            w_enc,
            b_enc,
            w_dec,
            b_dec,
        })
    }

    /// `W_enc = W_dec = I`, zero biases.
    pub fn identity(d: usize) -> Self {
        let mut eye = vec![0.0; d * d];
        for i in 0..d {
            eye[i * d + i] = 1.0;
        }
        Self::new(d, d, eye.clone(), vec![0.0; d], eye, vec![0.0; d]).expect("identity shapes")
    }

    /// Gaussian weights scaled by `1/sqrt(d)` and small biases.
    pub fn random<R: Rng + ?Sized>(d: usize, k_features: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (d as f64).sqrt();
        let mut draw = |n: usize, s: f64| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let x: f64 = StandardNormal.sample(rng);
                    x * s
                })
                .collect()
        };
        let w_enc = draw(k_features * d, scale);
        let b_enc = draw(k_features, 0.1);
        let w_dec = draw(d * k_features, scale);
        let b_dec = draw(d, 0.1);
        Self::new(d, k_features, w_enc, b_enc, w_dec, b_dec).expect("random shapes")
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k_features(&self) -> usize {
        self.k_features
    }

    pub fn w_enc(&self) -> &[f64] {
        &self.w_enc
    }

    pub fn b_enc(&self) -> &[f64] {
        &self.b_enc
    }

    pub fn w_dec(&self) -> &[f64] {
        &self.w_dec
    }

    pub fn b_dec(&self) -> &[f64] {
        &self.b_dec
    }
}

fn check_len(h: &[f64], d: usize) -> Result<()> {
    if h.len() != d {
        return Err(Error::DimMismatch {
            expected: d,
            got: h.len(),
        });
    }
    if !all_finite(h) {
        return Err(Error::InvalidVector("hidden state is not finite".into()));
    }
    Ok(())
}

/// Dense pre-activation `W_enc · normalize(h) + b_enc`.
pub fn encode_preactivation(h: &[f64], weights: &SaeWeights, config: &SaeConfig) -> Result<Vec<f64>> {
    check_len(h, weights.d)?;
    let d = weights.d;
    let normalized: Vec<f64> = match config.normalization {
        Normalization::Identity => h.to_vec(),
        Normalization::SubtractDecoderBias => {
            h.iter().zip(&weights.b_dec).map(|(x, b)| x - b).collect()
        }
    };
    Ok(weights
        .w_enc
        .chunks_exact(d)
        .zip(&weights.b_enc)
        .map(|(row, b)| row.iter().zip(&normalized).map(|(w, x)| w * x).sum::<f64>() + b)
        .collect())
}

/// Keeps the `kappa` largest coordinates (ties toward the lower index), then
/// drops retained coordinates that are not strictly positive.
pub fn topk_sparsify(a: &[f64], kappa: usize) -> Result<SparseVector> {
    if kappa == 0 {
        return Err(Error::ZeroKappa);
    }
    if kappa > a.len() {
        return Err(Error::KappaTooLarge {
            kappa,
            dim: a.len(),
        });
    }
    if !all_finite(a) {
        return Err(Error::InvalidVector("pre-activation is not finite".into()));
    }
    let rank = |x: &usize, y: &usize| a[*y].total_cmp(&a[*x]).then(x.cmp(y));
    let mut order: Vec<usize> = (0..a.len()).collect();
    if kappa < order.len() {
        order.select_nth_unstable_by(kappa - 1, rank);
        order.truncate(kappa);
    }
    let pairs = order
        .into_iter()
        .filter(|&i| a[i] > 0.0)
        .map(|i| (i as u32, a[i]));
    SparseVector::from_pairs(a.len() as u32, pairs)
}

/// `W_dec · z + b_dec`, touching only the support of `z`.
pub fn decode(z: &SparseVector, weights: &SaeWeights) -> Result<Vec<f64>> {
    if z.dim() as usize != weights.k_features {
        return Err(Error::DimMismatch {
            expected: weights.k_features,
            got: z.dim() as usize,
        });
    }
    let k = weights.k_features;
    let mut out = weights.b_dec.clone();
    for (row, o) in out.iter_mut().enumerate() {
        let base = row * k;
        for (m, v) in z.iter() {
            *o += weights.w_dec[base + m as usize] * v;
        }
    }
    Ok(out)
}

/// Encode, sparsify and decode one hidden state.
pub fn sae_forward(
    h: &[f64],
    weights: &SaeWeights,
    config: &SaeConfig,
) -> Result<(SparseVector, Vec<f64>)> {
    config.check(weights.k_features)?;
    let a = encode_preactivation(h, weights, config)?;
    let z = topk_sparsify(&a, config.kappa)?;
    let h_hat = decode(&z, weights)?;
    Ok((z, h_hat))
}

/// Mean squared reconstruction error over a batch of hidden states.
pub fn reconstruction_loss(
    h_batch: &[Vec<f64>],
    weights: &SaeWeights,
    config: &SaeConfig,
) -> Result<f64> {
    reconstruction_loss_with(h_batch, weights, config, Exec::default())
}

pub fn reconstruction_loss_with(
    h_batch: &[Vec<f64>],
    weights: &SaeWeights,
    config: &SaeConfig,
    exec: Exec,
) -> Result<f64> {
    if h_batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let per_sample: Vec<Result<f64>> = exec.map(h_batch, |h| {
        let (_, h_hat) = sae_forward(h, weights, config)?;
        Ok(h_hat.iter().zip(h).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
    });
    let mut total = 0.0;
    for err in per_sample {
        total += err?;
    }
    Ok(total / h_batch.len() as f64)
}

/// Mean L1 norm of a batch of sparse codes; 0 for an empty batch.
pub fn l1_penalty(z_batch: &[SparseVector]) -> f64 {
    if z_batch.is_empty() {
        return 0.0;
    }
    z_batch.iter().map(SparseVector::l1).sum::<f64>() / z_batch.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaeEvaluation {
    pub reconstruction: f64,
    pub l1: f64,
    /// `lambda_rec · reconstruction + lambda_l1 · l1`.
    pub weighted: f64,
}

/// Evaluation losses of the frozen SAE on a batch (no gradient, no update).
pub fn evaluate(h_batch: &[Vec<f64>], weights: &SaeWeights, config: &SaeConfig) -> Result<SaeEvaluation> {
    let reconstruction = reconstruction_loss(h_batch, weights, config)?;
    let codes = h_batch
        .iter()
        .map(|h| sae_forward(h, weights, config).map(|(z, _)| z))
        .collect::<Result<Vec<_>>>()?;
    let l1 = l1_penalty(&codes);
    Ok(SaeEvaluation {
        reconstruction,
        l1,
        weighted: config.lambda_rec * reconstruction + config.lambda_l1 * l1,
    })
}

fn push_f32s(buf: &mut Vec<u8>, xs: &[f64]) {
    for &x in xs {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

pub fn write_weights(path: impl AsRef<Path>, weights: &SaeWeights, kappa: u32) -> Result<()> {
    let path = path.as_ref();
    let n = weights.w_enc.len() + weights.b_enc.len() + weights.w_dec.len() + weights.b_dec.len();
    let mut buf = Vec::with_capacity(16 + 4 * n);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(weights.d as u32).to_le_bytes());
    buf.extend_from_slice(&(weights.k_features as u32).to_le_bytes());
    buf.extend_from_slice(&kappa.to_le_bytes());
    push_f32s(&mut buf, &weights.w_enc);
    push_f32s(&mut buf, &weights.b_enc);
    push_f32s(&mut buf, &weights.w_dec);
    push_f32s(&mut buf, &weights.b_dec);
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a weight file, returning the weights and the header's kappa.
pub fn read_weights(path: impl AsRef<Path>) -> Result<(SaeWeights, u32)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::WeightFormat("bad magic or truncated header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let (d, k, kappa) = (u32_at(4) as usize, u32_at(8) as usize, u32_at(12));
    let n = 2 * k * d + k + d;
    if bytes.len() != 16 + 4 * n {
        return Err(Error::WeightFormat(format!(
            "expected {} bytes for d={d} K={k}, found {}",
            16 + 4 * n,
            bytes.len()
        )));
    }
    let floats: Vec<f64> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    let (w_enc, rest) = floats.split_at(k * d);
    let (b_enc, rest) = rest.split_at(k);
    let (w_dec, b_dec) = rest.split_at(d * k);
    let weights = SaeWeights::new(d, k, w_enc.to_vec(), b_enc.to_vec(), w_dec.to_vec(), b_dec.to_vec())?;
    Ok((weights, kappa))
}

pub fn write_config(path: impl AsRef<Path>, config: &SaeConfig) -> Result<()> {
    let path = path.as_ref();
    let mut body = serde_json::to_string_pretty(config)?;
    body.push('\n');
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_config(path: impl AsRef<Path>) -> Result<SaeConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(z: &SparseVector) -> Vec<(u32, f64)> {
        z.iter().collect()
    }

    #[test]
    fn identity_encoder_passes_through() {
        let w = SaeWeights::identity(4);
        let a = encode_preactivation(&[1.0, 2.0, 3.0, 4.0], &w, &SaeConfig::new(4)).unwrap();
        assert_eq!(a, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn bias_only_encoder() {
        let w = SaeWeights::new(3, 2, vec![0.0; 6], vec![1.0, 1.0], vec![0.0; 6], vec![0.0; 3]).unwrap();
        let a = encode_preactivation(&[7.0, -2.0, 0.5], &w, &SaeConfig::new(1)).unwrap();
        assert_eq!(a, vec![1.0, 1.0]);
    }

    #[test]
    fn subtract_decoder_bias() {
        let mut eye = vec![0.0; 4];
        eye[0] = 1.0;
        eye[3] = 1.0;
        let w = SaeWeights::new(2, 2, eye.clone(), vec![0.0; 2], eye, vec![1.0, 2.0]).unwrap();
        let mut cfg = SaeConfig::new(2);
        cfg.normalization = Normalization::SubtractDecoderBias;
        assert_eq!(encode_preactivation(&[3.0, 3.0], &w, &cfg).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn encoder_length_mismatch() {
        let w = SaeWeights::identity(4);
        assert!(encode_preactivation(&[1.0], &w, &SaeConfig::new(1)).is_err());
    }

    #[test]
    fn topk_examples() {
        let z = topk_sparsify(&[0.5, -1.0, 2.0, 0.1], 2).unwrap();
        assert_eq!(pairs(&z), vec![(0, 0.5), (2, 2.0)]);
        assert!(topk_sparsify(&[-1.0, -2.0, -3.0], 2).unwrap().is_empty());
        let z = topk_sparsify(&[1.0, 1.0, 1.0, 0.0], 2).unwrap();
        assert_eq!(pairs(&z), vec![(0, 1.0), (1, 1.0)]);
        assert!(matches!(topk_sparsify(&[1.0], 2), Err(Error::KappaTooLarge { .. })));
        assert!(matches!(topk_sparsify(&[1.0], 0), Err(Error::ZeroKappa)));
    }

    #[test]
    fn decode_examples() {
        let w = SaeWeights::new(2, 3, vec![0.0; 6], vec![0.0; 3], vec![0.0; 6], vec![3.0, 4.0]).unwrap();
        assert_eq!(decode(&SparseVector::empty(3), &w).unwrap(), vec![3.0, 4.0]);

        let w = SaeWeights::identity(4);
        let z = SparseVector::new(4, vec![1], vec![2.0]).unwrap();
        assert_eq!(decode(&z, &w).unwrap(), vec![0.0, 2.0, 0.0, 0.0]);
        assert!(decode(&SparseVector::empty(5), &w).is_err());
    }

    #[test]
    fn forward_examples() {
        let w = SaeWeights::identity(2);
        let (z, h_hat) = sae_forward(&[1.0, 2.0], &w, &SaeConfig::new(2)).unwrap();
        assert_eq!(pairs(&z), vec![(0, 1.0), (1, 2.0)]);
        assert_eq!(h_hat, vec![1.0, 2.0]);

        let (z, h_hat) = sae_forward(&[1.0, 2.0], &w, &SaeConfig::new(1)).unwrap();
        assert_eq!(pairs(&z), vec![(1, 2.0)]);
        assert_eq!(h_hat, vec![0.0, 2.0]);
    }

    #[test]
    fn losses() {
        let w = SaeWeights::identity(3);
        let batch = vec![vec![0.5, 1.0, 2.0], vec![3.0, 0.25, 1.0]];
        assert_eq!(reconstruction_loss(&batch, &w, &SaeConfig::new(3)).unwrap(), 0.0);

        let w = SaeWeights::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2], vec![0.0; 4], vec![0.0; 2]).unwrap();
        assert_eq!(reconstruction_loss(&[vec![3.0, 4.0]], &w, &SaeConfig::new(2)).unwrap(), 25.0);
        assert!(matches!(
            reconstruction_loss(&[], &w, &SaeConfig::new(2)),
            Err(Error::EmptyBatch)
        ));

        let z = SparseVector::new(4, vec![0, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(l1_penalty(&[z]), 3.0);
        assert_eq!(l1_penalty(&[SparseVector::empty(4)]), 0.0);
        assert_eq!(l1_penalty(&[]), 0.0);
    }

    #[test]
    fn weighted_evaluation() {
        let w = SaeWeights::identity(2);
        let cfg = SaeConfig {
            kappa: 2,
            normalization: Normalization::Identity,
            lambda_rec: 1.0,
            lambda_l1: 0.5,
        };
        let eval = evaluate(&[vec![1.0, 3.0]], &w, &cfg).unwrap();
        assert_eq!(eval.reconstruction, 0.0);
        assert_eq!(eval.l1, 4.0);
        assert_eq!(eval.weighted, 2.0);
    }

    #[test]
    fn weight_file_round_trip() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let w = SaeWeights::random(4, 8, &mut rng);
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("sae.bin");
        write_weights(&path, &w, 2).unwrap();
        let (back, kappa) = read_weights(&path).unwrap();
        assert_eq!(kappa, 2);
        assert_eq!(back.d(), 4);
        assert_eq!(back.k_features(), 8);
        for (a, b) in back.w_enc().iter().zip(w.w_enc()) {
            assert_eq!(*a, f64::from(*b as f32));
        }
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"SAEW");
        assert_eq!(bytes.len(), 16 + 4 * (2 * 32 + 8 + 4));

        fs::write(&path, &bytes[..20]).unwrap();
        assert!(read_weights(&path).is_err());

        let cfg_path = tmp.path().join("sae.json");
        let cfg = SaeConfig::new(2);
        write_config(&cfg_path, &cfg).unwrap();
        assert_eq!(read_config(&cfg_path).unwrap(), cfg);
    }
}
