use super::Tensor;

/// What role a parameter plays; decides weight decay and trainability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    NormScale,
    NormShift,
    /// Batch-norm running statistics: saved with the model, never trained.
    RunningStat,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Vec<f32>,
    pub kind: ParamKind,
}

impl Param {
    pub fn new(value: Tensor, kind: ParamKind) -> Self {
        let grad = if kind == ParamKind::RunningStat {
            Vec::new()
        } else {
            vec![0.0; value.len()]
        };
        Self { value, grad, kind }
    }

    pub fn trainable(&self) -> bool {
        self.kind != ParamKind::RunningStat
    }

    /// L2 weight decay applies to weights only, not to biases or norm parameters.
    pub fn decays(&self) -> bool {
        self.kind == ParamKind::Weight
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Anything owning parameters. `visit` walks them in a stable order with
/// dotted names, which double as checkpoint keys.
pub trait Module {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
