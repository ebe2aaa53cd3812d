/// Adam for gradient ascent on a two-column parameter table.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<[f64; 2]>,
    v: Vec<[f64; 2]>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, rows: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![[0.0; 2]; rows],
            v: vec![[0.0; 2]; rows],
            t: 0,
        }
    }

    pub fn ascend(&mut self, params: &mut [[f64; 2]], grad: &[[f64; 2]]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for a in 0..2 {
                m[a] = self.beta1 * m[a] + (1.0 - self.beta1) * g[a];
                v[a] = self.beta2 * v[a] + (1.0 - self.beta2) * g[a] * g[a];
                p[a] += self.lr * (m[a] / c1) / ((v[a] / c2).sqrt() + self.eps);
            }
        }
    }
}
