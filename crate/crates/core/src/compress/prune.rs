//! Structured pruning: whole units (conv channels, dense neurons) or whole
//! layers are removed so the result is again a dense network.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::network::{
    count_params, param_breakdown, LayerKind, LayerSpec, Model, NetworkError, Shape, StoredTensor,
};

use super::size::size_report;
use super::CompressError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PruneStrategy {
    Random { seed: u64 },
    /// Drop the units whose weight rows have the smallest L1 norm.
    Magnitude,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub removed_units: BTreeMap<String, usize>,
    pub removed_layers: Vec<String>,
    /// Parameter change of every layer whose count moved (negative = removed).
    pub param_deltas: BTreeMap<String, i64>,
    pub params_before: usize,
    pub params_after: usize,
    pub size_before: usize,
    pub size_after: usize,
}

fn finish(before: &Model, after: &Model, mut report: PruneReport) -> Result<PruneReport, CompressError> {
    let old: BTreeMap<_, _> = param_breakdown(&before.spec)?.into_iter().collect();
    let new: BTreeMap<_, _> = param_breakdown(&after.spec)?.into_iter().collect();
    for (name, &n) in &old {
        let m = new.get(name).copied().unwrap_or(0);
        if m != n {
            report.param_deltas.insert(name.clone(), m as i64 - n as i64);
        }
    }
    report.params_before = count_params(&before.spec)?;
    report.params_after = count_params(&after.spec)?;
    report.size_before = size_report(before).param_bytes;
    report.size_after = size_report(after).param_bytes;
    Ok(report)
}

/// Layers eligible for unit pruning: every conv and dense layer except the
/// final (class-emitting) one.
pub fn prunable_layers(model: &Model) -> Vec<String> {
    let params: Vec<&LayerSpec> = model.spec.layers.iter().filter(|l| l.has_params()).collect();
    params[..params.len().saturating_sub(1)].iter().map(|l| l.name.clone()).collect()
}

/// Prunes `fraction` of the units of every prunable layer.
pub fn prune_neurons(
    model: &Model,
    fraction: f64,
    strategy: PruneStrategy,
) -> Result<(Model, PruneReport), CompressError> {
    let layers = prunable_layers(model);
    prune_neurons_in(model, &layers, fraction, strategy)
}

/// Prunes `fraction` of the units of the named layers only.
pub fn prune_neurons_in(
    model: &Model,
    layers: &[String],
    fraction: f64,
    strategy: PruneStrategy,
) -> Result<(Model, PruneReport), CompressError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(CompressError::InvalidFraction(fraction));
    }
    let eligible = prunable_layers(model);
    let mut out = model.clone();
    // pruning works on float values; quantized tensors are expanded
    for t in out.params.values_mut().chain(out.running_stats.values_mut()) {
        if t.is_quantized() {
            *t = StoredTensor::f32(t.shape.clone(), t.to_f32());
        }
    }
    let mut report = PruneReport::default();
    for name in layers {
        if !eligible.contains(name) {
            return Err(NetworkError::ShapeIncompatible {
                layer: name.clone(),
                reason: "not a prunable hidden conv/dense layer".into(),
            }
            .into());
        }
        let (li, layer) = out.spec.layer(name).map(|(i, l)| (i, l.clone())).unwrap();
        let units = layer.units().unwrap();
        let n_remove = ((units as f64) * fraction).floor() as usize;
        let n_remove = n_remove.min(units - 1);
        if n_remove == 0 {
            continue;
        }
        let keep = choose_keep(&out, &layer, units - n_remove, strategy, li)?;
        remove_units(&mut out, li, &keep)?;
        report.removed_units.insert(name.clone(), n_remove);
    }
    out.validate()?;
    let report = finish(model, &out, report)?;
    Ok((out, report))
}

fn choose_keep(
    model: &Model,
    layer: &LayerSpec,
    n_keep: usize,
    strategy: PruneStrategy,
    layer_index: usize,
) -> Result<Vec<usize>, CompressError> {
    let units = layer.units().unwrap();
    let mut keep: Vec<usize> = match strategy {
        PruneStrategy::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (layer_index as u64).wrapping_mul(0xA24B_AED4_963E_E407));
            sample(&mut rng, units, n_keep).into_vec()
        }
        PruneStrategy::Magnitude => {
            let w = model.params[&format!("{}.weight", layer.name)].to_f32();
            let row = w.len() / units;
            let mut norms: Vec<(f64, usize)> = w
                .chunks(row)
                .enumerate()
                .map(|(u, r)| (r.iter().map(|x| f64::from(x.abs())).sum(), u))
                .collect();
            // largest norms survive; ties keep the lower index
            norms.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            norms.into_iter().take(n_keep).map(|(_, u)| u).collect()
        }
    };
    keep.sort_unstable();
    Ok(keep)
}

/// Keeps index `keep[j]` along `axis` of a row-major tensor.
fn select_axis(t: &StoredTensor, axis: usize, keep: &[usize]) -> StoredTensor {
    let values = t.to_f32();
    let outer: usize = t.shape[..axis].iter().product();
    let dim = t.shape[axis];
    let inner: usize = t.shape[axis + 1..].iter().product();
    let mut out = Vec::with_capacity(outer * keep.len() * inner);
    for o in 0..outer {
        for &k in keep {
            let start = (o * dim + k) * inner;
            out.extend_from_slice(&values[start..start + inner]);
        }
    }
    let mut shape = t.shape.clone();
    shape[axis] = keep.len();
    StoredTensor::f32(shape, out)
}

/// Removes the units of layer `li` not in `keep`, plus the matching input
/// columns of the next parameterized layer.
fn remove_units(model: &mut Model, li: usize, keep: &[usize]) -> Result<(), CompressError> {
    let name = model.spec.layers[li].name.clone();
    let inputs = model.spec.layer_inputs()?;
    for suffix in ["weight", "bias", "bn.gamma", "bn.beta"] {
        let key = format!("{name}.{suffix}");
        if let Some(t) = model.params.get(&key) {
            let t = select_axis(t, 0, keep);
            model.params.insert(key, t);
        }
    }
    for suffix in ["bn.running_mean", "bn.running_var"] {
        let key = format!("{name}.{suffix}");
        if let Some(t) = model.running_stats.get(&key) {
            let t = select_axis(t, 0, keep);
            model.running_stats.insert(key, t);
        }
    }
    let next = (li + 1..model.spec.layers.len())
        .find(|&j| model.spec.layers[j].has_params())
        .expect("final layer is never pruned");
    // a flatten in between turns each channel into a block of h·w columns
    let mut block = 1;
    for j in li + 1..next {
        if matches!(model.spec.layers[j].kind, LayerKind::Flatten) {
            if let Shape::Map { h, w, .. } = inputs[j] {
                block = h * w;
            }
        }
    }
    let next_name = model.spec.layers[next].name.clone();
    let key = format!("{next_name}.weight");
    let w = &model.params[&key];
    let units = model.spec.layers[li].units().unwrap();
    let viewed = StoredTensor::f32(
        vec![w.shape[0], units, w.numel() / w.shape[0] / units],
        w.to_f32(),
    );
    debug_assert!(matches!(model.spec.layers[next].kind, LayerKind::Conv { .. }) || viewed.shape[2] == block);
    let mut trimmed = select_axis(&viewed, 1, keep);
    let mut shape = w.shape.clone();
    shape[1] = keep.len() * if shape.len() == 2 { block } else { 1 };
    trimmed.shape = shape;
    model.params.insert(key, trimmed);

    match &mut model.spec.layers[li].kind {
        LayerKind::Conv { out_ch, .. } => *out_ch = keep.len(),
        LayerKind::Dense { out_units, .. } => *out_units = keep.len(),
        _ => unreachable!(),
    }
    model.spec.infer_shapes()?;
    Ok(())
}

/// Deletes the named layers. A conv's trailing ReLU goes with it when the conv
/// already followed a ReLU. Every surviving parameter tensor must still fit
/// its layer's new input, otherwise the offending layer is reported.
pub fn prune_layers(model: &Model, names: &[String]) -> Result<(Model, PruneReport), CompressError> {
    let mut out = model.clone();
    for name in names {
        let Some((i, layer)) = out.spec.layer(name).map(|(i, l)| (i, l.clone())) else {
            return Err(NetworkError::ShapeIncompatible {
                layer: name.clone(),
                reason: "no such layer".into(),
            }
            .into());
        };
        let follows_relu = i > 0 && matches!(out.spec.layers[i - 1].kind, LayerKind::Relu);
        let trailing_relu = matches!(out.spec.layers.get(i + 1).map(|l| &l.kind), Some(LayerKind::Relu));
        if matches!(layer.kind, LayerKind::Conv { .. }) && follows_relu && trailing_relu {
            out.spec.layers.remove(i + 1);
        }
        out.spec.layers.remove(i);
        out.params.retain(|k, _| !k.starts_with(&format!("{name}.")));
        out.running_stats.retain(|k, _| !k.starts_with(&format!("{name}.")));

        let shapes = out.spec.infer_shapes().map_err(|_| NetworkError::ShapeIncompatible {
            layer: name.clone(),
            reason: "remaining layers no longer chain".into(),
        })?;
        if shapes.last() != Some(&Shape::Flat(out.spec.n_classes)) {
            return Err(NetworkError::ShapeIncompatible {
                layer: name.clone(),
                reason: "network would no longer emit class logits".into(),
            }
            .into());
        }
        for (pname, shape) in out.spec.param_tensors()? {
            match out.params.get(&pname) {
                Some(t) if t.shape == shape => {}
                _ => {
                    return Err(NetworkError::ShapeIncompatible {
                        layer: name.clone(),
                        reason: format!("{pname} would need shape {shape:?}"),
                    }
                    .into())
                }
            }
        }
    }
    out.validate()?;
    let report = PruneReport { removed_layers: names.to_vec(), ..Default::default() };
    let report = finish(model, &out, report)?;
    Ok((out, report))
}

/// Convs that keep their channel count (input channels == output channels),
/// i.e. candidates for layer removal.
pub fn channel_preserving_convs(model: &Model) -> Result<Vec<String>, CompressError> {
    let inputs = model.spec.layer_inputs()?;
    Ok(model
        .spec
        .layers
        .iter()
        .zip(inputs)
        .filter_map(|(l, s)| match (&l.kind, s) {
            (LayerKind::Conv { out_ch, k, stride: 1, pad, .. }, Shape::Map { c, .. })
                if *out_ch == c && 2 * pad + 1 == *k =>
            {
                Some(l.name.clone())
            }
            _ => None,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;
    use crate::network::{build_student, layer_param_count, ArchConfig, Network};

    fn small() -> Model {
        let cfg = ArchConfig { widths: vec![4, 4, 8, 8], input_size: 16, ..ArchConfig::student() };
        Model::init(build_student(&cfg).unwrap(), 5).unwrap()
    }

    fn input(m: &Model, n: usize) -> Tensor<f32> {
        let [c, h, w] = m.spec.input_shape;
        let data = (0..n * c * h * w).map(|i| ((i * 37 % 101) as f32 / 50.0) - 1.0).collect();
        Tensor::new(vec![n, c, h, w], data).unwrap()
    }

    #[test]
    fn zero_fraction_is_identity() {
        let m = small();
        let (p, r) = prune_neurons(&m, 0.0, PruneStrategy::Magnitude).unwrap();
        assert_eq!(p, m);
        assert_eq!(r.params_before, r.params_after);
    }

    #[test]
    fn fraction_outside_range_rejected() {
        let m = small();
        assert!(matches!(prune_neurons(&m, 1.0, PruneStrategy::Magnitude), Err(CompressError::InvalidFraction(_))));
        assert!(prune_neurons(&m, -0.1, PruneStrategy::Magnitude).is_err());
    }

    #[test]
    fn head_hidden_layer_halves() {
        let cfg = ArchConfig::student();
        let m = Model::init(build_student(&cfg).unwrap(), 1).unwrap();
        let (p, r) =
            prune_neurons_in(&m, &["head.fc1".to_string()], 0.5, PruneStrategy::Random { seed: 3 }).unwrap();
        let (i, l) = p.spec.layer("head.fc1").unwrap();
        assert_eq!(l.units(), Some(32));
        let inp = p.spec.layer_inputs().unwrap()[i];
        assert_eq!(inp, Shape::Flat(4096));
        assert_eq!(p.param("head.fc1.weight").unwrap().shape, vec![32, 4096]);
        assert_eq!(layer_param_count(&LayerSpec { kind: LayerKind::Dense { out_units: 32, has_bn: false }, ..l.clone() }, inp), 131_104);
        assert_eq!(r.params_after, count_params(&p.spec).unwrap());
        assert_eq!(p.stored_param_count(), r.params_after);
    }

    #[test]
    fn pruned_network_keeps_class_count() {
        let m = small();
        for strategy in [PruneStrategy::Magnitude, PruneStrategy::Random { seed: 9 }] {
            let (p, r) = prune_neurons(&m, 0.5, strategy).unwrap();
            assert!(r.params_after < r.params_before);
            assert_eq!(p.stored_param_count(), r.params_after);
            let probs = Network::<f32>::from_model(&p).unwrap().predict_proba(&input(&p, 3)).unwrap();
            assert_eq!(probs.shape(), &[3, 4]);
            for row in probs.data().chunks(4) {
                assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn magnitude_pruning_keeps_largest_rows() {
        let mut m = small();
        // make channel 2 of conv1 dominant
        let w = m.params.get_mut("conv1.weight").unwrap();
        let per = w.numel() / 4;
        if let crate::network::TensorData::F32(v) = &mut w.data {
            v[2 * per..3 * per].iter_mut().for_each(|x| *x = 10.0);
        }
        let (p, _) = prune_neurons_in(&m, &["conv1".to_string()], 0.75, PruneStrategy::Magnitude).unwrap();
        assert!(p.param("conv1.weight").unwrap().to_f32().iter().all(|&x| x == 10.0));
    }

    #[test]
    fn removing_channel_preserving_conv_drops_its_count() {
        let m = small();
        let convs = channel_preserving_convs(&m).unwrap();
        assert_eq!(convs, vec!["conv2".to_string(), "conv4".to_string()]);
        let (i, layer) = m.spec.layer("conv2").unwrap();
        let own = layer_param_count(layer, m.spec.layer_inputs().unwrap()[i]);
        let (p, r) = prune_layers(&m, &["conv2".to_string()]).unwrap();
        assert_eq!(r.params_before - r.params_after, own);
        assert_eq!(r.param_deltas["conv2"], -(own as i64));
        assert!(p.spec.layer("conv2").is_none());
    }

    #[test]
    fn identity_conv_removal_preserves_logits() {
        let mut m = small();
        let w = m.params.get_mut("conv2.weight").unwrap();
        let [o, c, k, _] = w.shape[..] else { panic!() };
        let mut v = vec![0.0f32; o * c * k * k];
        for ch in 0..o {
            v[((ch * c + ch) * k + k / 2) * k + k / 2] = 1.0;
        }
        *w = StoredTensor::f32(w.shape.clone(), v);
        let b = m.params.get_mut("conv2.bias").unwrap();
        *b = StoredTensor::f32(b.shape.clone(), vec![0.0; o]);
        let x = input(&m, 2);
        let before = Network::<f32>::from_model(&m).unwrap().infer(&x).unwrap();
        let (p, _) = prune_layers(&m, &["conv2".to_string()]).unwrap();
        let after = Network::<f32>::from_model(&p).unwrap().infer(&x).unwrap();
        for (a, b) in before.data().iter().zip(after.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn channel_changing_conv_is_incompatible() {
        let m = small();
        let err = prune_layers(&m, &["conv3".to_string()]).unwrap_err();
        assert!(matches!(err, CompressError::Network(NetworkError::ShapeIncompatible { ref layer, .. }) if layer == "conv3"));
        assert!(prune_layers(&m, &["head.fc2".to_string()]).is_err());
        assert!(prune_layers(&m, &["nope".to_string()]).is_err());
    }
}
