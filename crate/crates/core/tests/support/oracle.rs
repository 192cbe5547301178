//! Brute-force reference for the attention summary, written against nested
//! vectors with literal formulas and no shared code with the library.

#![allow(dead_code)]

pub type Nested = Vec<Vec<Vec<Vec<f64>>>>;

pub struct RefHead {
    pub layer: usize,
    pub head: usize,
    pub entropy: f64,
}

pub struct RefBias {
    pub layer: usize,
    pub head: usize,
    pub token: String,
    pub focus: f64,
}

pub struct RefSummary {
    pub scores: Vec<f64>,
    pub top: Vec<(String, f64)>,
    pub heads: Vec<RefHead>,
    pub layers: Vec<(usize, f64)>,
    pub bias: Vec<RefBias>,
}

pub fn reference(
    att: &Nested,
    tokens: &[String],
    top_k_tokens: usize,
    top_k_heads: usize,
    top_k_layers: usize,
    special: &[&str],
    threshold: f64,
) -> RefSummary {
    let num_layers = att.len();
    let num_heads = att[0].len();
    let n = tokens.len();

    let mut scores = vec![0.0; n];
    let mut heads = Vec::new();
    let mut layers = Vec::new();
    let mut bias = Vec::new();
    for l in 0..num_layers {
        let mut total = 0.0;
        for h in 0..num_heads {
            let m = &att[l][h];
            for j in 0..n {
                let mut col = 0.0;
                for i in 0..n {
                    col += m[i][j];
                }
                scores[j] += col / n as f64;
            }
            let mut ent_sum = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for j in 0..n {
                    e -= m[i][j] * (m[i][j] + 1e-9).ln();
                }
                ent_sum += e;
            }
            let entropy = ent_sum / n as f64;
            heads.push(RefHead { layer: l, head: h, entropy });
            total += 1.0 / (entropy + 1e-9);

            for s in special {
                if let Some(idx) = tokens.iter().position(|t| t == s) {
                    let mut focus = 0.0;
                    for i in 0..n {
                        focus += m[i][idx];
                    }
                    focus /= n as f64;
                    if focus > threshold {
                        bias.push(RefBias { layer: l, head: h, token: s.to_string(), focus });
                    }
                }
            }
        }
        layers.push((l, total / num_heads as f64));
    }
    for s in scores.iter_mut() {
        *s /= (num_layers * num_heads) as f64;
    }

    // Selection sort so the ranking code is independent of the library's.
    let mut used = vec![false; n];
    let mut top = Vec::new();
    for _ in 0..top_k_tokens.min(n) {
        let mut best: Option<usize> = None;
        for j in 0..n {
            if !used[j] && best.is_none_or(|b| scores[j] > scores[b]) {
                best = Some(j);
            }
        }
        let b = best.unwrap();
        used[b] = true;
        top.push((tokens[b].clone(), (scores[b] * 1000.0).round() / 1000.0));
    }

    let mut ranked_heads = Vec::new();
    while ranked_heads.len() < top_k_heads && !heads.is_empty() {
        let mut best = 0;
        for k in 1..heads.len() {
            if heads[k].entropy < heads[best].entropy {
                best = k;
            }
        }
        ranked_heads.push(heads.remove(best));
    }

    let mut ranked_layers = Vec::new();
    while ranked_layers.len() < top_k_layers && !layers.is_empty() {
        let mut best = 0;
        for k in 1..layers.len() {
            if layers[k].1 > layers[best].1 {
                best = k;
            }
        }
        ranked_layers.push(layers.remove(best));
    }

    RefSummary { scores, top, heads: ranked_heads, layers: ranked_layers, bias }
}

use logsight_core::attnlysis::AnalysisSummary;
use rand::Rng;

pub const TOKEN_POOL: [&str; 8] = ["<s>", "</s>", "[CLS]", "[SEP]", "block", "error", "<NUM>", "served"];

/// A random row-stochastic stack with `layers, heads ≤ 3` and `2 ≤ seq ≤ 6`.
/// About a quarter of the rows are sparse, but every row keeps at least two
/// nonzero entries: for a head made only of one-hot rows, `entropy + 1e-9`
/// cancels to ~1e-18 and the inverse is not reproducible in f64 by any
/// evaluation order. Those heads are exercised by the edge-case tests.
pub fn random_case<R: Rng>(rng: &mut R) -> (Nested, Vec<String>) {
    let layers = rng.random_range(1..=3);
    let heads = rng.random_range(1..=3);
    let n = rng.random_range(2..=6);
    let att = (0..layers)
        .map(|_| {
            (0..heads)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            let sparse = rng.random_bool(0.25);
                            let mut row: Vec<f64> = (0..n)
                                .map(|_| if sparse && rng.random_bool(0.5) { 0.0 } else { rng.random::<f64>() })
                                .collect();
                            while row.iter().filter(|&&x| x > 0.0).count() < 2 {
                                let k = rng.random_range(0..n);
                                row[k] = rng.random::<f64>();
                            }
                            let s: f64 = row.iter().sum();
                            row.iter_mut().for_each(|x| *x /= s);
                            row
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let tokens = (0..n).map(|_| TOKEN_POOL[rng.random_range(0..TOKEN_POOL.len())].to_string()).collect();
    (att, tokens)
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    if (a - b).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: {a} vs reference {b}"))
    }
}

/// Field-for-field comparison of a library summary with the reference.
pub fn compare(s: &AnalysisSummary, r: &RefSummary, tol: f64) -> Result<(), String> {
    if s.saliency.scores.len() != r.scores.len() {
        return Err("score length".into());
    }
    for (j, (a, b)) in s.saliency.scores.iter().zip(&r.scores).enumerate() {
        close(*a, *b, tol, &format!("score[{j}]"))?;
    }
    if s.saliency.top_tokens.len() != r.top.len() {
        return Err("top token count".into());
    }
    for (t, (tok, score)) in s.saliency.top_tokens.iter().zip(&r.top) {
        if &t.token != tok {
            return Err(format!("top token {} vs {tok}", t.token));
        }
        close(t.score, *score, tol, "top token score")?;
    }
    if s.focused_heads.len() != r.heads.len() {
        return Err("focused head count".into());
    }
    for (h, rh) in s.focused_heads.iter().zip(&r.heads) {
        if (h.layer, h.head) != (rh.layer, rh.head) {
            return Err(format!("head ({}, {}) vs ({}, {})", h.layer, h.head, rh.layer, rh.head));
        }
        close(h.avg_entropy, rh.entropy, tol, "avg_entropy")?;
    }
    if s.standout_layers.len() != r.layers.len() {
        return Err("standout layer count".into());
    }
    for (l, (rl, rf)) in s.standout_layers.iter().zip(&r.layers) {
        if l.layer != *rl {
            return Err(format!("layer {} vs {rl}", l.layer));
        }
        close(l.focus_score, *rf, tol, "focus_score")?;
    }
    if s.bias_warnings.len() != r.bias.len() {
        return Err(format!("{} bias warnings vs {}", s.bias_warnings.len(), r.bias.len()));
    }
    for (w, rb) in s.bias_warnings.iter().zip(&r.bias) {
        if (w.layer, w.head, &w.token) != (rb.layer, rb.head, &rb.token) {
            return Err("bias warning identity".into());
        }
        close(w.avg_focus, rb.focus, tol, "avg_focus")?;
    }
    Ok(())
}
