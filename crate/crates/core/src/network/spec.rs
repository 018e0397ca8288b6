use serde::{Deserialize, Serialize};

use super::NetworkError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv { out_ch: usize, k: usize, stride: usize, pad: usize, has_bn: bool },
    MaxPool { k: usize },
    Relu,
    Dropout { p: f64 },
    Flatten,
    Dense { out_units: usize, has_bn: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self { name: name.into(), kind }
    }

    pub fn has_params(&self) -> bool {
        matches!(self.kind, LayerKind::Conv { .. } | LayerKind::Dense { .. })
    }

    pub fn has_bn(&self) -> bool {
        matches!(
            self.kind,
            LayerKind::Conv { has_bn: true, .. } | LayerKind::Dense { has_bn: true, .. }
        )
    }

    /// Output units of a parameterized layer (conv channels or dense units).
    pub fn units(&self) -> Option<usize> {
        match self.kind {
            LayerKind::Conv { out_ch, .. } => Some(out_ch),
            LayerKind::Dense { out_units, .. } => Some(out_units),
            _ => None,
        }
    }
}

/// Activation shape between layers, batch axis excluded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Map { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub fn numel(&self) -> usize {
        match *self {
            Shape::Map { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Map { c, h, w } => vec![c, h, w],
            Shape::Flat(n) => vec![n],
        }
    }
}

/// Parameter tensor names and shapes a layer owns, in canonical order.
pub fn param_shapes(layer: &LayerSpec, input: Shape) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let n = &layer.name;
    match (&layer.kind, input) {
        (LayerKind::Conv { out_ch, k, has_bn, .. }, Shape::Map { c, .. }) => {
            out.push((format!("{n}.weight"), vec![*out_ch, c, *k, *k]));
            out.push((format!("{n}.bias"), vec![*out_ch]));
            if *has_bn {
                out.push((format!("{n}.bn.gamma"), vec![*out_ch]));
                out.push((format!("{n}.bn.beta"), vec![*out_ch]));
            }
        }
        (LayerKind::Dense { out_units, has_bn }, Shape::Flat(fan_in)) => {
            out.push((format!("{n}.weight"), vec![*out_units, fan_in]));
            out.push((format!("{n}.bias"), vec![*out_units]));
            if *has_bn {
                out.push((format!("{n}.bn.gamma"), vec![*out_units]));
                out.push((format!("{n}.bn.beta"), vec![*out_units]));
            }
        }
        _ => {}
    }
    out
}

/// Running-statistic tensor names a layer owns.
pub fn running_stat_shapes(layer: &LayerSpec) -> Vec<(String, Vec<usize>)> {
    match (layer.has_bn(), layer.units()) {
        (true, Some(u)) => vec![
            (format!("{}.bn.running_mean", layer.name), vec![u]),
            (format!("{}.bn.running_var", layer.name), vec![u]),
        ],
        _ => Vec::new(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// (channels, height, width)
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub n_classes: usize,
}

impl NetworkSpec {
    pub fn input(&self) -> Shape {
        let [c, h, w] = self.input_shape;
        Shape::Map { c, h, w }
    }

    /// Output shape after every layer, validating compatibility on the way.
    pub fn infer_shapes(&self) -> Result<Vec<Shape>, NetworkError> {
        let mut shape = self.input();
        let mut shapes = Vec::with_capacity(self.layers.len());
        let incompatible = |layer: &LayerSpec, why: String| NetworkError::ShapeIncompatible {
            layer: layer.name.clone(),
            reason: why,
        };
        for layer in &self.layers {
            shape = match (&layer.kind, shape) {
                (LayerKind::Conv { out_ch, k, stride, pad, .. }, Shape::Map { h, w, .. }) => {
                    let ho = crate::autograd::conv_output_dim(h, *k, *stride, *pad);
                    let wo = crate::autograd::conv_output_dim(w, *k, *stride, *pad);
                    match (ho, wo) {
                        (Some(h), Some(w)) if *out_ch > 0 => Shape::Map { c: *out_ch, h, w },
                        _ => {
                            return Err(incompatible(layer, format!("kernel {k} on {h}x{w} input")))
                        }
                    }
                }
                (LayerKind::MaxPool { k }, Shape::Map { c, h, w }) => {
                    if *k == 0 || h % k != 0 || w % k != 0 {
                        return Err(incompatible(layer, format!("pool {k} does not tile {h}x{w}")));
                    }
                    Shape::Map { c, h: h / k, w: w / k }
                }
                (LayerKind::Flatten, s) => Shape::Flat(s.numel()),
                (LayerKind::Dense { out_units, .. }, Shape::Flat(_)) if *out_units > 0 => {
                    Shape::Flat(*out_units)
                }
                (LayerKind::Relu, s) => s,
                (LayerKind::Dropout { p }, s) => {
                    if !(0.0..1.0).contains(p) {
                        return Err(incompatible(layer, format!("dropout probability {p}")));
                    }
                    s
                }
                (kind, s) => return Err(incompatible(layer, format!("{kind:?} cannot follow {s:?}"))),
            };
            shapes.push(shape);
        }
        match shapes.last() {
            Some(Shape::Flat(n)) if *n == self.n_classes => Ok(shapes),
            other => Err(NetworkError::ShapeIncompatible {
                layer: self.layers.last().map(|l| l.name.clone()).unwrap_or_default(),
                reason: format!("network ends in {other:?}, expected {} logits", self.n_classes),
            }),
        }
    }

    /// Input shape seen by each layer.
    pub fn layer_inputs(&self) -> Result<Vec<Shape>, NetworkError> {
        let outs = self.infer_shapes()?;
        let mut ins = Vec::with_capacity(outs.len());
        ins.push(self.input());
        ins.extend_from_slice(&outs[..outs.len().saturating_sub(1)]);
        Ok(ins)
    }

    pub fn layer(&self, name: &str) -> Option<(usize, &LayerSpec)> {
        self.layers.iter().enumerate().find(|(_, l)| l.name == name)
    }

    /// Every (name, shape) parameter tensor, in layer order.
    pub fn param_tensors(&self) -> Result<Vec<(String, Vec<usize>)>, NetworkError> {
        let ins = self.layer_inputs()?;
        Ok(self.layers.iter().zip(ins).flat_map(|(l, s)| param_shapes(l, s)).collect())
    }

    pub fn running_tensors(&self) -> Vec<(String, Vec<usize>)> {
        self.layers.iter().flat_map(running_stat_shapes).collect()
    }
}

/// Closed-form learnable parameter count of one layer given its input.
///
/// conv: out·in·k² + out; dense: out·in + out; batch norm adds 2·units.
pub fn layer_param_count(layer: &LayerSpec, input: Shape) -> usize {
    let bn = |units: usize, has_bn: bool| if has_bn { 2 * units } else { 0 };
    match (&layer.kind, input) {
        (LayerKind::Conv { out_ch, k, has_bn, .. }, Shape::Map { c, .. }) => {
            out_ch * c * k * k + out_ch + bn(*out_ch, *has_bn)
        }
        (LayerKind::Dense { out_units, has_bn }, Shape::Flat(fan_in)) => {
            out_units * fan_in + out_units + bn(*out_units, *has_bn)
        }
        _ => 0,
    }
}

/// Per-layer learnable parameter counts.
pub fn param_breakdown(spec: &NetworkSpec) -> Result<Vec<(String, usize)>, NetworkError> {
    let ins = spec.layer_inputs()?;
    Ok(spec
        .layers
        .iter()
        .zip(ins)
        .map(|(l, s)| (l.name.clone(), layer_param_count(l, s)))
        .collect())
}

pub fn count_params(spec: &NetworkSpec) -> Result<usize, NetworkError> {
    Ok(param_breakdown(spec)?.into_iter().map(|(_, n)| n).sum())
}

/// Prefix shared by every classification-head layer name.
pub const HEAD_PREFIX: &str = "head.";

pub fn is_head_layer(name: &str) -> bool {
    name.starts_with(HEAD_PREFIX)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    /// Hidden units of the first dense layer (64 in the reference head; 36 for
    /// the shallow-ANN variant).
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self { hidden: 64, dropout: 0.5 }
    }
}

/// dropout → flatten → dense+bn → relu → dropout → dense+bn (logits).
pub fn build_head(cfg: &HeadConfig, n_classes: usize) -> Vec<LayerSpec> {
    let h = |s: &str| format!("{HEAD_PREFIX}{s}");
    vec![
        LayerSpec::new(h("dropout1"), LayerKind::Dropout { p: cfg.dropout }),
        LayerSpec::new(h("flatten"), LayerKind::Flatten),
        LayerSpec::new(h("fc1"), LayerKind::Dense { out_units: cfg.hidden, has_bn: true }),
        LayerSpec::new(h("relu1"), LayerKind::Relu),
        LayerSpec::new(h("dropout2"), LayerKind::Dropout { p: cfg.dropout }),
        LayerSpec::new(h("fc2"), LayerKind::Dense { out_units: n_classes, has_bn: true }),
    ]
}

/// Convolutional feature extractor plus classification head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    /// Output channels of each conv layer; a 2×2 max-pool follows every
    /// second conv.
    pub widths: Vec<usize>,
    pub input_channels: usize,
    pub input_size: usize,
    pub kernel: usize,
    pub n_classes: usize,
    pub head: HeadConfig,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::teacher()
    }
}

impl ArchConfig {
    pub fn teacher() -> Self {
        Self {
            widths: vec![32, 32, 64, 64, 128, 128, 256, 256],
            input_channels: 3,
            input_size: 64,
            kernel: 3,
            n_classes: 4,
            head: HeadConfig::default(),
        }
    }

    /// Widths sized so the total lands near 5.7M parameters.
    pub fn teacher_wide() -> Self {
        Self { widths: vec![64, 64, 128, 128, 256, 512, 544, 256], ..Self::teacher() }
    }

    /// Widths sized so the total lands near 651k parameters.
    pub fn student() -> Self {
        Self { widths: vec![16, 16, 32, 32, 64, 64, 112, 256], ..Self::teacher() }
    }
}

fn build_cnn(cfg: &ArchConfig) -> Result<NetworkSpec, NetworkError> {
    if cfg.widths.is_empty() || cfg.widths.len() % 2 != 0 {
        return Err(NetworkError::ShapeIncompatible {
            layer: "conv".into(),
            reason: format!("need an even, non-zero number of conv widths, got {}", cfg.widths.len()),
        });
    }
    let mut layers = Vec::new();
    for (i, &w) in cfg.widths.iter().enumerate() {
        let idx = i + 1;
        layers.push(LayerSpec::new(
            format!("conv{idx}"),
            LayerKind::Conv {
                out_ch: w,
                k: cfg.kernel,
                stride: 1,
                pad: cfg.kernel / 2,
                // odd layers in 1-based numbering
                has_bn: idx % 2 == 1,
            },
        ));
        layers.push(LayerSpec::new(format!("relu{idx}"), LayerKind::Relu));
        if idx % 2 == 0 {
            layers.push(LayerSpec::new(format!("pool{}", idx / 2), LayerKind::MaxPool { k: 2 }));
        }
    }
    layers.extend(build_head(&cfg.head, cfg.n_classes));
    let spec = NetworkSpec {
        input_shape: [cfg.input_channels, cfg.input_size, cfg.input_size],
        layers,
        n_classes: cfg.n_classes,
    };
    spec.infer_shapes()?;
    Ok(spec)
}

pub fn build_teacher(cfg: &ArchConfig) -> Result<NetworkSpec, NetworkError> {
    build_cnn(cfg)
}

/// Same layer pattern as the teacher with narrower widths taken from `cfg`.
pub fn build_student(cfg: &ArchConfig) -> Result<NetworkSpec, NetworkError> {
    build_cnn(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head_only() -> NetworkSpec {
        NetworkSpec { input_shape: [256, 4, 4], layers: build_head(&HeadConfig::default(), 4), n_classes: 4 }
    }

    #[test]
    fn head_breakdown_matches_closed_form() {
        let spec = head_only();
        let b = param_breakdown(&spec).unwrap();
        let get = |n: &str| b.iter().find(|(name, _)| name == n).unwrap().1;
        // dense 4096→64 (262,208) + bn 128; dense 64→4 (260) + bn 8
        assert_eq!(get("head.fc1"), 4096 * 64 + 64 + 128);
        assert_eq!(get("head.fc2"), 64 * 4 + 4 + 8);
        assert_eq!(count_params(&spec).unwrap(), 262_604);
    }

    #[test]
    fn default_teacher_ends_in_256x4x4() {
        let spec = build_teacher(&ArchConfig::teacher()).unwrap();
        let ins = spec.layer_inputs().unwrap();
        let (idx, _) = spec.layer("head.flatten").unwrap();
        assert_eq!(ins[idx], Shape::Map { c: 256, h: 4, w: 4 });
        assert_eq!(spec.layers.iter().filter(|l| matches!(l.kind, LayerKind::Conv { .. })).count(), 8);
        assert_eq!(spec.layers.iter().filter(|l| matches!(l.kind, LayerKind::MaxPool { .. })).count(), 4);
        let bn: Vec<_> = spec.layers.iter().filter(|l| l.has_bn() && !is_head_layer(&l.name)).map(|l| l.name.as_str()).collect();
        assert_eq!(bn, ["conv1", "conv3", "conv5", "conv7"]);
    }

    #[test]
    fn single_layer_counts() {
        let conv = LayerSpec::new("c", LayerKind::Conv { out_ch: 32, k: 3, stride: 1, pad: 1, has_bn: false });
        assert_eq!(layer_param_count(&conv, Shape::Map { c: 3, h: 8, w: 8 }), 896);
        let bn_conv = LayerSpec::new("c", LayerKind::Conv { out_ch: 64, k: 1, stride: 1, pad: 0, has_bn: true });
        let plain = LayerSpec::new("c", LayerKind::Conv { out_ch: 64, k: 1, stride: 1, pad: 0, has_bn: false });
        let input = Shape::Map { c: 64, h: 8, w: 8 };
        assert_eq!(layer_param_count(&bn_conv, input) - layer_param_count(&plain, input), 128);
    }

    #[test]
    fn student_near_distilled_size() {
        let n = count_params(&build_student(&ArchConfig::student()).unwrap()).unwrap() as f64;
        assert!((n / 651_404.0 - 1.0).abs() < 0.05, "{n}");
    }

    #[test]
    fn wide_teacher_is_larger_than_student_by_margin() {
        let t = count_params(&build_teacher(&ArchConfig::teacher_wide()).unwrap()).unwrap() as f64;
        let s = count_params(&build_student(&ArchConfig::student()).unwrap()).unwrap() as f64;
        assert!((t / 5_719_690.0 - 1.0).abs() < 0.05, "{t}");
        assert!(s < 0.6 * t);
    }

    #[test]
    fn shallow_ann_head_variant_builds() {
        let cfg = ArchConfig { head: HeadConfig { hidden: 36, dropout: 0.5 }, ..ArchConfig::teacher() };
        let spec = build_teacher(&cfg).unwrap();
        assert_eq!(spec.infer_shapes().unwrap().last(), Some(&Shape::Flat(4)));
    }

    #[test]
    fn odd_width_count_rejected() {
        let cfg = ArchConfig { widths: vec![8, 8, 8], ..ArchConfig::teacher() };
        assert!(matches!(build_teacher(&cfg), Err(NetworkError::ShapeIncompatible { .. })));
    }

    #[test]
    fn too_many_pools_rejected() {
        let cfg = ArchConfig { widths: vec![4; 14], ..ArchConfig::teacher() };
        assert!(build_teacher(&cfg).is_err());
    }

    #[test]
    fn spec_serde_round_trip() {
        let spec = build_student(&ArchConfig::student()).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<NetworkSpec>(&json).unwrap(), spec);
    }
}
