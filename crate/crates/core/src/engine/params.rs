use super::{EngineError, Tape, Tensor, Var};

/// Named, ordered parameter tensors of one network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter and returns its position.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Puts every parameter on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Puts every parameter on `tape` as a constant.
    pub fn bind_constant(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Replaces values from `(name, tensor)` pairs; every parameter must be
    /// present with a matching shape.
    pub fn load_from(&mut self, entries: &[(String, Tensor)]) -> Result<(), EngineError> {
        for (name, slot) in self.names.iter().zip(self.tensors.iter_mut()) {
            let found = entries
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| EngineError::Format(format!("missing tensor `{name}`")))?;
            if found.1.shape() != slot.shape() {
                return Err(EngineError::Format(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    found.1.shape(),
                    slot.shape()
                )));
            }
            *slot = found.1.clone();
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        for t in &mut self.tensors {
            for v in t.data_mut() {
                *v = value;
            }
        }
    }
}
