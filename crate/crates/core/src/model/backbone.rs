//! ResNet-18 topology with a configurable base width.
//!
//! Stem: 7x7/2 convolution, batch norm, ReLU, 3x3/2 max pool. Then four
//! stages of two basic blocks at widths `w, 2w, 4w, 8w`, with stride 2 and a
//! 1x1 projection shortcut at the start of stages 2-4. At `w = 64` this is
//! the standard ImageNet ResNet-18 feature extractor with a 512-wide output.

use rand::Rng;

use crate::nn::param_join as join;
use crate::nn::{
    relu_backward_inplace, relu_inplace, BatchNorm, Conv2d, MaxPool2d, Mode, Module, Param, Tensor,
};

#[derive(Debug, Clone)]
struct BasicBlock {
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
    shortcut: Option<(Conv2d, BatchNorm)>,
    cache: Option<(Tensor, Tensor)>,
}

impl BasicBlock {
    fn new(cin: usize, cout: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let shortcut = (stride != 1 || cin != cout)
            .then(|| (Conv2d::new(cin, cout, 1, stride, 0, rng), BatchNorm::new(cout)));
        Self {
            conv1: Conv2d::new(cin, cout, 3, stride, 1, rng),
            bn1: BatchNorm::new(cout),
            conv2: Conv2d::new(cout, cout, 3, 1, 1, rng),
            bn2: BatchNorm::new(cout),
            shortcut,
            cache: None,
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let mut a = self.bn1.forward(&self.conv1.forward(x, mode), mode);
        relu_inplace(&mut a);
        let mut out = self.bn2.forward(&self.conv2.forward(&a, mode), mode);
        match &mut self.shortcut {
            Some((conv, bn)) => out.add_assign(&bn.forward(&conv.forward(x, mode), mode)),
            None => out.add_assign(x),
        }
        relu_inplace(&mut out);
        if mode == Mode::Train {
            self.cache = Some((a, out.clone()));
        }
        out
    }

    fn backward(&mut self, dout: &Tensor) -> Tensor {
        let (a, out) = self.cache.take().expect("block backward without train forward");
        let mut d = dout.clone();
        relu_backward_inplace(&mut d, &out);
        let mut da = self.conv2.backward(&self.bn2.backward(&d), true).unwrap();
        relu_backward_inplace(&mut da, &a);
        let mut dx = self.conv1.backward(&self.bn1.backward(&da), true).unwrap();
        match &mut self.shortcut {
            Some((conv, bn)) => dx.add_assign(&conv.backward(&bn.backward(&d), true).unwrap()),
            None => dx.add_assign(&d),
        }
        dx
    }
}

impl Module for BasicBlock {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.bn1.visit(&join(prefix, "bn1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.bn2.visit(&join(prefix, "bn2"), f);
        if let Some((conv, bn)) = &mut self.shortcut {
            conv.visit(&join(prefix, "shortcut.conv"), f);
            bn.visit(&join(prefix, "shortcut.bn"), f);
        }
    }
}

/// Per-frame feature extractor. Input `[N, S, S, 3]`, output maps
/// `[N, h, w, 8 * width]`.
#[derive(Debug, Clone)]
pub struct ResNet18 {
    width: usize,
    stem: Conv2d,
    stem_bn: BatchNorm,
    pool: MaxPool2d,
    blocks: Vec<BasicBlock>,
    stem_out: Option<Tensor>,
}

impl ResNet18 {
    pub fn new(width: usize, rng: &mut impl Rng) -> Self {
        let stem = Conv2d::new(3, width, 7, 2, 3, rng);
        let stem_bn = BatchNorm::new(width);
        let mut blocks = Vec::with_capacity(8);
        let mut cin = width;
        for stage in 0..4 {
            let cout = width << stage;
            for i in 0..2 {
                let stride = if stage > 0 && i == 0 { 2 } else { 1 };
                blocks.push(BasicBlock::new(cin, cout, stride, rng));
                cin = cout;
            }
        }
        Self {
            width,
            stem,
            stem_bn,
            pool: MaxPool2d::default(),
            blocks,
            stem_out: None,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn feature_dim(&self) -> usize {
        8 * self.width
    }

    /// Spatial size of the output maps for a square input of side `crop`.
    pub fn output_side(crop: usize) -> usize {
        let stem = (crop + 6 - 7) / 2 + 1;
        let mut side = MaxPool2d::output_hw(stem, stem).0;
        for _ in 0..3 {
            side = (side + 2 - 3) / 2 + 1;
        }
        side
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        assert_eq!(x.channels(), 3, "backbone expects 3-channel input");
        let mut h = self.stem_bn.forward(&self.stem.forward(x, mode), mode);
        relu_inplace(&mut h);
        if mode == Mode::Train {
            self.stem_out = Some(h.clone());
        }
        let mut h = self.pool.forward(&h, mode);
        for block in &mut self.blocks {
            h = block.forward(&h, mode);
        }
        h
    }

    /// Backpropagates into every backbone parameter; the image gradient is not formed.
    pub fn backward(&mut self, dmaps: &Tensor) {
        let mut d = dmaps.clone();
        for block in self.blocks.iter_mut().rev() {
            d = block.backward(&d);
        }
        let mut d = self.pool.backward(&d);
        let stem_out = self.stem_out.take().expect("backbone backward without train forward");
        relu_backward_inplace(&mut d, &stem_out);
        let d = self.stem_bn.backward(&d);
        self.stem.backward(&d, false);
    }
}

impl Module for ResNet18 {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.stem.visit(&join(prefix, "stem.conv"), f);
        self.stem_bn.visit(&join(prefix, "stem.bn"), f);
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.visit(&join(prefix, &format!("layer{}.{}", i / 2 + 1, i % 2)), f);
        }
    }
}
