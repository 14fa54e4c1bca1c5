use super::layers::{missing_cache, BatchNorm, ConvBn, Init, Params};
use super::se::SeBlock;
use crate::error::{shape_err, Result};
use crate::tensor::{relu_backward, relu_forward, NormMode, ParamSlot, Real, Tensor};

/// Residual bottleneck that halves the length:
/// `relu(se(expand(main(reduce(x)))) + shortcut(x))`.
#[derive(Clone, Debug)]
pub struct Bottleneck<T: Real> {
    pub reduce: ConvBn<T>,
    pub main: ConvBn<T>,
    pub expand: ConvBn<T>,
    pub se: Option<SeBlock<T>>,
    pub shortcut: ConvBn<T>,
    output: Option<Tensor<T>>,
}

pub struct BottleneckShape {
    pub c_in: usize,
    pub c_mid: usize,
    pub c_out: usize,
    pub kernel_size: usize,
    /// `None` disables the attention path.
    pub reduction: Option<usize>,
}

impl<T: Real> Bottleneck<T> {
    pub fn new(name: &str, shape: &BottleneckShape, init: &mut Init) -> Self {
        let BottleneckShape { c_in, c_mid, c_out, kernel_size, reduction } = *shape;
        Self {
            reduce: ConvBn::new(&format!("{name}.reduce"), 1, c_in, c_mid, 1, true, init),
            main: ConvBn::new(&format!("{name}.main"), kernel_size, c_mid, c_mid, 2, true, init),
            expand: ConvBn::new(&format!("{name}.expand"), 1, c_mid, c_out, 1, false, init),
            se: reduction.map(|r| SeBlock::new(&format!("{name}.se"), c_out, r, init)),
            shortcut: ConvBn::new(&format!("{name}.shortcut"), 1, c_in, c_out, 2, false, init),
            output: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>> {
        if x.length() < 2 {
            return Err(shape_err!("bottleneck input of length {} cannot be strided", x.length()));
        }
        let h = self.reduce.forward(x, mode)?;
        let h = self.main.forward(&h, mode)?;
        let mut h = self.expand.forward(&h, mode)?;
        if let Some(se) = &mut self.se {
            h = se.forward(&h, mode)?;
        }
        h.add_assign(&self.shortcut.forward(x, mode)?)?;
        let y = relu_forward(&h);
        if mode == NormMode::Train {
            self.output = Some(y.clone());
        }
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.output.take().ok_or_else(|| missing_cache(&self.reduce.name))?;
        let g = relu_backward(grad, &y)?;
        let mut gm = g.clone();
        if let Some(se) = &mut self.se {
            gm = se.backward(&gm)?;
        }
        let gm = self.expand.backward(&gm)?;
        let gm = self.main.backward(&gm)?;
        let mut gx = self.reduce.backward(&gm)?;
        gx.add_assign(&self.shortcut.backward(&g)?)?;
        Ok(gx)
    }

    fn parts(&self) -> [&ConvBn<T>; 4] {
        [&self.reduce, &self.main, &self.expand, &self.shortcut]
    }
}

impl<T: Real> Params<T> for Bottleneck<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a ParamSlot<T>>) {
        self.reduce.params(out);
        self.main.params(out);
        self.expand.params(out);
        if let Some(se) = &self.se {
            se.params(out);
        }
        self.shortcut.params(out);
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamSlot<T>>) {
        self.reduce.params_mut(out);
        self.main.params_mut(out);
        self.expand.params_mut(out);
        if let Some(se) = &mut self.se {
            se.params_mut(out);
        }
        self.shortcut.params_mut(out);
    }
    fn norms<'a>(&'a self, out: &mut Vec<&'a BatchNorm<T>>) {
        for p in self.parts() {
            p.norms(out);
        }
    }
    fn norms_mut<'a>(&'a mut self, out: &mut Vec<&'a mut BatchNorm<T>>) {
        self.reduce.norms_mut(out);
        self.main.norms_mut(out);
        self.expand.norms_mut(out);
        self.shortcut.norms_mut(out);
    }
}
