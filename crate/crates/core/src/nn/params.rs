/// Flat view over a model's trainable parameters, used by the optimizer and
/// the finite-difference checker. `write_params` and `read_params` must visit
/// parameters in the same order as `layout`.
pub trait Parameterized {
    fn param_len(&self) -> usize;
    fn write_params(&self, out: &mut Vec<f64>);
    /// Overwrites parameters from `src`, returning how many values were consumed.
    fn read_params(&mut self, src: &[f64]) -> usize;
    fn layout(&self, prefix: &str, out: &mut ParamLayout);

    fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_len());
        self.write_params(&mut v);
        v
    }
}

/// Named contiguous blocks of a flattened parameter vector.
#[derive(Debug, Clone, Default)]
pub struct ParamLayout {
    blocks: Vec<(String, usize)>,
}

impl ParamLayout {
    pub fn of<P: Parameterized + ?Sized>(p: &P, prefix: &str) -> Self {
        let mut l = ParamLayout::default();
        p.layout(prefix, &mut l);
        l
    }

    pub fn push(&mut self, name: String, len: usize) {
        self.blocks.push((name, len));
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.1).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Human-readable location of flat index `idx`, e.g. `decoder.layers[1].bias[3]`.
    pub fn path_of(&self, idx: usize) -> String {
        let mut start = 0;
        for (name, len) in &self.blocks {
            if idx < start + len {
                return format!("{name}[{}]", idx - start);
            }
            start += len;
        }
        format!("<out of range {idx}>")
    }
}
