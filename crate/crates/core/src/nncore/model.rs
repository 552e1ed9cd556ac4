use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::layout::PromptLayout;
use super::params::{Grads, LayerParams, Params};
use super::real::Real;
use crate::error::{Error, Result};
use crate::vocab::TokenId;

const LN_EPS: f64 = 1e-5;
// sqrt(2/pi), tanh-approximated GELU
const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_A: f64 = 0.044_715;

#[derive(Debug, Clone)]
struct NormCache<F> {
    xhat: Array2<F>,
    inv_std: Array1<F>,
}

#[derive(Debug, Clone)]
struct LayerTape<F> {
    ln1: NormCache<F>,
    ln1_out: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    probs: Vec<Array2<F>>,
    ctx: Array2<F>,
    ln2: NormCache<F>,
    ln2_out: Array2<F>,
    pre: Array2<F>,
    act: Array2<F>,
}

/// Activations of one forward pass, enough for an exact reverse pass.
#[derive(Debug, Clone)]
pub struct Tape<F> {
    tokens: Vec<(usize, TokenId)>,
    audio: Option<(usize, Array2<F>)>,
    seq_len: usize,
    response_start: usize,
    response_len: usize,
    vocab_size: usize,
    layers: Vec<LayerTape<F>>,
    lnf: NormCache<F>,
    lnf_out: Array2<F>,
}

impl<F> Tape<F> {
    pub fn response_len(&self) -> usize {
        self.response_len
    }
}

fn layer_norm<F: Real>(x: &Array2<F>, g: &Array2<F>, b: &Array2<F>) -> (Array2<F>, NormCache<F>) {
    let n = F::of(x.ncols() as f64);
    let eps = F::of(LN_EPS);
    let mut xhat = Array2::zeros(x.raw_dim());
    let mut inv_std = Array1::zeros(x.nrows());
    for (i, row) in x.outer_iter().enumerate() {
        let mean = row.sum() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
        let is = F::one() / (var + eps).sqrt();
        inv_std[i] = is;
        xhat.row_mut(i).iter_mut().zip(row.iter()).for_each(|(o, &v)| *o = (v - mean) * is);
    }
    let out = &xhat * g + b;
    (out, NormCache { xhat, inv_std })
}

fn layer_norm_back<F: Real>(
    dout: &Array2<F>,
    cache: &NormCache<F>,
    g: &Array2<F>,
    dg: &mut Array2<F>,
    db: &mut Array2<F>,
) -> Array2<F> {
    *dg += &(dout * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *db += &dout.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dout * g;
    let n = F::of(dout.ncols() as f64);
    let mut dx = Array2::zeros(dout.raw_dim());
    for i in 0..dout.nrows() {
        let dh = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let mean_d = dh.sum() / n;
        let mean_dx = dh.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<F>() / n;
        let is = cache.inv_std[i];
        for j in 0..dout.ncols() {
            dx[[i, j]] = is * (dh[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

fn gelu<F: Real>(a: F) -> F {
    let (c, k) = (F::of(GELU_C), F::of(GELU_A));
    let half = F::of(0.5);
    half * a * (F::one() + (c * (a + k * a * a * a)).tanh())
}

fn gelu_grad<F: Real>(a: F) -> F {
    let (c, k) = (F::of(GELU_C), F::of(GELU_A));
    let half = F::of(0.5);
    let th = (c * (a + k * a * a * a)).tanh();
    half * (F::one() + th) + half * a * (F::one() - th * th) * c * (F::one() + F::of(3.0) * k * a * a)
}

fn softmax_rows_in_place<F: Real>(m: &mut Array2<F>) {
    for mut row in m.outer_iter_mut() {
        let max = row.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
}

fn embed<F: Real>(
    params: &Params<F>,
    layout: &PromptLayout<'_, F>,
) -> Result<(Array2<F>, Vec<(usize, TokenId)>, Option<(usize, Array2<F>)>)> {
    let c = &params.config;
    let t = layout.len();
    c.check_layout_len(t)?;
    let mut x = Array2::zeros((t, c.model_dim));
    let mut tokens = Vec::with_capacity(layout.instruction.len() + layout.response.len());
    let response_start = layout.response_start();
    let positioned = layout
        .instruction
        .iter()
        .enumerate()
        .chain(layout.response.iter().enumerate().map(|(i, tok)| (response_start + i, tok)));
    for (pos, &tok) in positioned {
        if tok as usize >= c.vocab_size {
            return Err(Error::Contract(format!(
                "token {tok} at position {pos} is outside the vocabulary of {}",
                c.vocab_size
            )));
        }
        x.row_mut(pos).assign(&params.tok_emb.row(tok as usize));
        tokens.push((pos, tok));
    }
    let audio = match layout.audio {
        Some(a) => {
            if c.feature_dim == 0 || a.ncols() != c.feature_dim {
                return Err(Error::Contract(format!(
                    "audio features have width {}, model expects {}",
                    a.ncols(),
                    c.feature_dim
                )));
            }
            let start = layout.instruction.len();
            let projected = a.dot(&params.audio_w) + &params.audio_b;
            x.slice_mut(s![start..start + a.nrows(), ..]).assign(&projected);
            Some((start, a.to_owned()))
        }
        None => None,
    };
    x += &params.pos_emb.slice(s![..t, ..]);
    Ok((x, tokens, audio))
}

fn attention_forward<F: Real>(
    l: &LayerParams<F>,
    ln1_out: &Array2<F>,
    heads: usize,
    causal: bool,
) -> (Array2<F>, Array2<F>, Array2<F>, Vec<Array2<F>>, Array2<F>) {
    let q = ln1_out.dot(&l.wq) + &l.bq;
    let k = ln1_out.dot(&l.wk) + &l.bk;
    let v = ln1_out.dot(&l.wv) + &l.bv;
    let (t, d) = q.dim();
    let dh = d / heads;
    let scale = F::of(1.0 / (dh as f64).sqrt());
    let mut ctx = Array2::zeros((t, d));
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t());
        scores.mapv_inplace(|x| x * scale);
        if causal {
            for i in 0..t {
                scores.slice_mut(s![i, i + 1..]).fill(F::neg_infinity());
            }
        }
        softmax_rows_in_place(&mut scores);
        ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        probs.push(scores);
    }
    (q, k, v, probs, ctx)
}

fn run<F: Real>(
    params: &Params<F>,
    layout: &PromptLayout<'_, F>,
    record: bool,
) -> Result<(Array2<F>, Option<Tape<F>>)> {
    let c = &params.config;
    let (mut x, tokens, audio) = embed(params, layout)?;
    let causal = params.is_causal();
    let mut layer_tapes = Vec::with_capacity(if record { c.num_layers } else { 0 });
    for l in &params.layers {
        let (ln1_out, ln1) = layer_norm(&x, &l.ln1_g, &l.ln1_b);
        let (q, k, v, probs, ctx) = attention_forward(l, &ln1_out, c.num_heads, causal);
        x += &(ctx.dot(&l.wo) + &l.bo);
        let (ln2_out, ln2) = layer_norm(&x, &l.ln2_g, &l.ln2_b);
        let pre = ln2_out.dot(&l.w1) + &l.b1;
        let act = pre.mapv(gelu);
        x += &(act.dot(&l.w2) + &l.b2);
        if record {
            layer_tapes.push(LayerTape { ln1, ln1_out, q, k, v, probs, ctx, ln2, ln2_out, pre, act });
        }
    }
    let (lnf_out, lnf) = layer_norm(&x, &params.lnf_g, &params.lnf_b);
    let rs = layout.response_start();
    let rl = layout.response.len();
    let logits = lnf_out.slice(s![rs..rs + rl, ..]).dot(&params.w_out) + &params.b_out;
    let tape = record.then(|| Tape {
        tokens,
        audio,
        seq_len: layout.len(),
        response_start: rs,
        response_len: rl,
        vocab_size: c.vocab_size,
        layers: layer_tapes,
        lnf,
        lnf_out,
    });
    Ok((logits, tape))
}

/// Runs the network over `layout` and returns logits for the response rows
/// (`response_len × vocab_size`) together with the tape for [`backprop`].
pub fn forward<F: Real>(params: &Params<F>, layout: &PromptLayout<'_, F>) -> Result<(Array2<F>, Tape<F>)> {
    let (logits, tape) = run(params, layout, true)?;
    Ok((logits, tape.expect("tape recorded")))
}

/// Inference-only forward pass; identical logits to [`forward`] without the tape.
pub fn logits<F: Real>(params: &Params<F>, layout: &PromptLayout<'_, F>) -> Result<Array2<F>> {
    run(params, layout, false).map(|(l, _)| l)
}

/// Reverse pass: gradients of `sum(dlogits ⊙ logits)` with respect to every
/// parameter of `params`.
pub fn backprop<F: Real>(params: &Params<F>, tape: &Tape<F>, dlogits: ArrayView2<'_, F>) -> Result<Grads<F>> {
    let c = &params.config;
    if dlogits.dim() != (tape.response_len, tape.vocab_size) || c.vocab_size != tape.vocab_size {
        return Err(Error::Contract(format!(
            "dlogits shape {:?} does not match tape ({}, {})",
            dlogits.dim(),
            tape.response_len,
            tape.vocab_size
        )));
    }
    if tape.layers.len() != params.layers.len() {
        return Err(Error::Contract("tape was recorded with a different layer count".into()));
    }
    let mut g = params.zeros_like();
    let (t, rs, rl) = (tape.seq_len, tape.response_start, tape.response_len);
    let resp_rows = s![rs..rs + rl, ..];

    g.w_out = tape.lnf_out.slice(resp_rows).t().dot(&dlogits);
    g.b_out = dlogits.sum_axis(Axis(0)).insert_axis(Axis(0));
    let mut dlnf_out = Array2::zeros((t, c.model_dim));
    dlnf_out.slice_mut(resp_rows).assign(&dlogits.dot(&params.w_out.t()));
    let mut dx = layer_norm_back(&dlnf_out, &tape.lnf, &params.lnf_g, &mut g.lnf_g, &mut g.lnf_b);

    let heads = c.num_heads;
    let dh = c.head_dim();
    let scale = F::of(1.0 / (dh as f64).sqrt());
    for ((l, lt), gl) in params.layers.iter().zip(&tape.layers).zip(g.layers.iter_mut()).rev() {
        // feed-forward branch
        gl.w2 += &lt.act.t().dot(&dx);
        gl.b2 += &dx.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut dpre = dx.dot(&l.w2.t());
        dpre.zip_mut_with(&lt.pre, |d, &a| *d = *d * gelu_grad(a));
        gl.w1 += &lt.ln2_out.t().dot(&dpre);
        gl.b1 += &dpre.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dln2 = dpre.dot(&l.w1.t());
        dx += &layer_norm_back(&dln2, &lt.ln2, &l.ln2_g, &mut gl.ln2_g, &mut gl.ln2_b);

        // attention branch
        gl.wo += &lt.ctx.t().dot(&dx);
        gl.bo += &dx.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dctx = dx.dot(&l.wo.t());
        let mut dq = Array2::zeros((t, c.model_dim));
        let mut dk = Array2::zeros((t, c.model_dim));
        let mut dv = Array2::zeros((t, c.model_dim));
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let p = &lt.probs[h];
            let dctx_h = dctx.slice(cols);
            let dp = dctx_h.dot(&lt.v.slice(cols).t());
            dv.slice_mut(cols).assign(&p.t().dot(&dctx_h));
            let mut ds = Array2::zeros((t, t));
            for i in 0..t {
                let row_dot: F = dp.row(i).iter().zip(p.row(i)).map(|(&a, &b)| a * b).sum();
                for j in 0..t {
                    ds[[i, j]] = p[[i, j]] * (dp[[i, j]] - row_dot) * scale;
                }
            }
            dq.slice_mut(cols).assign(&ds.dot(&lt.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&lt.q.slice(cols)));
        }
        gl.wq += &lt.ln1_out.t().dot(&dq);
        gl.bq += &dq.sum_axis(Axis(0)).insert_axis(Axis(0));
        gl.wk += &lt.ln1_out.t().dot(&dk);
        gl.bk += &dk.sum_axis(Axis(0)).insert_axis(Axis(0));
        gl.wv += &lt.ln1_out.t().dot(&dv);
        gl.bv += &dv.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dln1 = dq.dot(&l.wq.t()) + dk.dot(&l.wk.t()) + dv.dot(&l.wv.t());
        dx += &layer_norm_back(&dln1, &lt.ln1, &l.ln1_g, &mut gl.ln1_g, &mut gl.ln1_b);
    }

    g.pos_emb.slice_mut(s![..t, ..]).assign(&dx);
    for &(pos, tok) in &tape.tokens {
        let mut row = g.tok_emb.row_mut(tok as usize);
        row += &dx.row(pos);
    }
    if let Some((start, audio)) = &tape.audio {
        let da = dx.slice(s![*start..*start + audio.nrows(), ..]);
        g.audio_w = audio.t().dot(&da);
        g.audio_b = da.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{init_params, AttentionMode, ModelConfig, Precision};
    use ndarray::Array2;

    fn cfg(attention: AttentionMode) -> ModelConfig {
        ModelConfig {
            vocab_size: 9,
            model_dim: 8,
            num_layers: 2,
            num_heads: 2,
            ffn_dim: 12,
            max_positions: 16,
            feature_dim: 3,
            attention,
            precision: Precision::Double,
        }
    }

    fn audio() -> Array2<f64> {
        Array2::from_shape_fn((3, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin())
    }

    #[test]
    fn forward_is_pure() {
        let p = init_params::<f64>(&cfg(AttentionMode::Bidirectional), 1).unwrap();
        let a = audio();
        let layout = PromptLayout::new(&[1], Some(a.view()), &[3, 5, 6, 3]);
        let (l1, _) = forward(&p, &layout).unwrap();
        let (l2, _) = forward(&p, &layout).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(l1, logits(&p, &layout).unwrap());
        assert_eq!(l1.dim(), (4, 9));
    }

    #[test]
    fn causal_positions_ignore_the_future() {
        let p = init_params::<f64>(&cfg(AttentionMode::Causal), 2).unwrap();
        let a = audio();
        let base = logits(&p, &PromptLayout::new(&[1], Some(a.view()), &[4, 5, 6, 7])).unwrap();
        let changed = logits(&p, &PromptLayout::new(&[1], Some(a.view()), &[4, 5, 8, 2])).unwrap();
        assert_eq!(base.row(0), changed.row(0));
        assert_eq!(base.row(1), changed.row(1));
        assert_ne!(base.row(2), changed.row(2));
    }

    #[test]
    fn bidirectional_positions_see_everything() {
        let p = init_params::<f64>(&cfg(AttentionMode::Bidirectional), 3).unwrap();
        let a = audio();
        let base = logits(&p, &PromptLayout::new(&[1], Some(a.view()), &[4, 5, 6, 7])).unwrap();
        let changed = logits(&p, &PromptLayout::new(&[1], Some(a.view()), &[4, 5, 6, 8])).unwrap();
        assert_ne!(base.row(0), changed.row(0));
        let mut a2 = audio();
        a2[[2, 1]] += 0.5;
        let changed = logits(&p, &PromptLayout::new(&[1], Some(a2.view()), &[4, 5, 6, 7])).unwrap();
        assert_ne!(base.row(0), changed.row(0));
    }

    #[test]
    fn overflow_and_bad_inputs_are_rejected() {
        let p = init_params::<f64>(&cfg(AttentionMode::Bidirectional), 1).unwrap();
        let long = vec![4u32; 17];
        assert!(matches!(logits(&p, &PromptLayout::new(&[], None, &long)), Err(Error::Length { .. })));
        assert!(matches!(logits(&p, &PromptLayout::new(&[], None, &[99])), Err(Error::Contract(_))));
        let wide = Array2::<f64>::zeros((2, 5));
        assert!(matches!(logits(&p, &PromptLayout::new(&[], Some(wide.view()), &[4])), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let p = init_params::<f64>(&cfg(AttentionMode::Bidirectional), 4).unwrap();
        let a = audio();
        let (l, tape) = forward(&p, &PromptLayout::new(&[1], Some(a.view()), &[3, 5])).unwrap();
        let g = backprop(&p, &tape, Array2::zeros(l.raw_dim()).view()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn backprop_is_linear_in_output_gradient() {
        let p = init_params::<f64>(&cfg(AttentionMode::Bidirectional), 5).unwrap();
        let a = audio();
        let (l, tape) = forward(&p, &PromptLayout::new(&[1], Some(a.view()), &[3, 5, 6])).unwrap();
        let dl = Array2::from_shape_fn(l.raw_dim(), |(i, j)| ((i * 7 + j) as f64).cos());
        let g1 = backprop(&p, &tape, dl.view()).unwrap();
        let g3 = backprop(&p, &tape, (&dl * 3.0).view()).unwrap();
        for ((name, a), (_, b)) in g1.tensors().into_iter().zip(g3.tensors()) {
            for (&x, &y) in a.iter().zip(b.iter()) {
                assert!((3.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()), "{name}");
            }
        }
    }

    #[test]
    fn backprop_rejects_mismatched_shape() {
        let p = init_params::<f64>(&cfg(AttentionMode::Bidirectional), 5).unwrap();
        let (_, tape) = forward(&p, &PromptLayout::new(&[1], None, &[3, 5, 6])).unwrap();
        let bad = Array2::<f64>::zeros((2, 9));
        assert!(matches!(backprop(&p, &tape, bad.view()), Err(Error::Contract(_))));
    }
}
