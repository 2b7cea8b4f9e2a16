use rand::Rng;

use crate::error::{shape_err, Result};

/// Two-layer perceptron `w2 * relu(w1 * v + b1) + b2`, matrices row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpParams {
    pub fn new(
        input: usize,
        hidden: usize,
        output: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self> {
        if w1.len() != hidden * input
            || b1.len() != hidden
            || w2.len() != output * hidden
            || b2.len() != output
        {
            return shape_err(
                "MlpParams::new",
                format!(
                    "chain {input} -> {hidden} -> {output} with w1 {}, b1 {}, w2 {}, b2 {}",
                    w1.len(),
                    b1.len(),
                    w2.len(),
                    b2.len()
                ),
            );
        }
        Ok(Self {
            input,
            hidden,
            output,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            input,
            hidden,
            output,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; output * hidden],
            b2: vec![0.0; output],
        }
    }

    /// Passes the first `min(input, output)` entries through unchanged.
    ///
    /// Uses `hidden = 2 * input` rows `[I; -I]` so that
    /// `relu(v) - relu(-v) = v` holds for either sign.
    pub fn identity(input: usize, output: usize) -> Self {
        let hidden = 2 * input;
        let mut p = Self::zeros(input, hidden, output);
        for i in 0..input {
            p.w1[i * input + i] = 1.0;
            p.w1[(input + i) * input + i] = -1.0;
        }
        for o in 0..output.min(input) {
            p.w2[o * hidden + o] = 1.0;
            p.w2[o * hidden + input + o] = -1.0;
        }
        p
    }

    pub fn random(input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        let b1 = (6.0 / (input + hidden) as f64).sqrt();
        let b2 = (6.0 / (hidden + output) as f64).sqrt();
        Self {
            input,
            hidden,
            output,
            w1: (0..hidden * input)
                .map(|_| rng.random_range(-b1..b1))
                .collect(),
            b1: (0..hidden).map(|_| rng.random_range(-0.1..0.1)).collect(),
            w2: (0..output * hidden)
                .map(|_| rng.random_range(-b2..b2))
                .collect(),
            b2: (0..output).map(|_| rng.random_range(-0.1..0.1)).collect(),
        }
    }

    fn hidden_pre(&self, v: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.input..(j + 1) * self.input];
                self.b1[j] + row.iter().zip(v).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }
}

pub fn mlp(v: &[f64], p: &MlpParams) -> Result<Vec<f64>> {
    if v.len() != p.input {
        return shape_err("mlp", format!("input length {} != {}", v.len(), p.input));
    }
    let a: Vec<f64> = p.hidden_pre(v).into_iter().map(|z| z.max(0.0)).collect();
    Ok((0..p.output)
        .map(|o| {
            let row = &p.w2[o * p.hidden..(o + 1) * p.hidden];
            p.b2[o] + row.iter().zip(&a).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub input: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

pub fn mlp_backward(v: &[f64], p: &MlpParams, grad_out: &[f64]) -> Result<MlpGrads> {
    if v.len() != p.input || grad_out.len() != p.output {
        return shape_err("mlp_backward", "input or gradient length mismatch");
    }
    let z = p.hidden_pre(v);
    let a: Vec<f64> = z.iter().map(|&z| z.max(0.0)).collect();
    let mut w2 = vec![0.0; p.w2.len()];
    let mut ga = vec![0.0; p.hidden];
    for o in 0..p.output {
        for j in 0..p.hidden {
            w2[o * p.hidden + j] = grad_out[o] * a[j];
            ga[j] += grad_out[o] * p.w2[o * p.hidden + j];
        }
    }
    let gz: Vec<f64> = ga
        .iter()
        .zip(&z)
        .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
        .collect();
    let mut w1 = vec![0.0; p.w1.len()];
    let mut input = vec![0.0; p.input];
    for j in 0..p.hidden {
        for i in 0..p.input {
            w1[j * p.input + i] = gz[j] * v[i];
            input[i] += gz[j] * p.w1[j * p.input + i];
        }
    }
    Ok(MlpGrads {
        input,
        w1,
        b1: gz,
        w2,
        b2: grad_out.to_vec(),
    })
}
