"""
Model Zoo Tests
Output shapes, parameter counts, determinism and end-to-end gradient checks
"""

from dataclasses import replace

import numpy as np
import pytest

from config.model_specs import ARCH_CONFIGS, Arch, ModelSpec, get_model_spec
from models.zoo import (
    Model,
    _conv_block,
    _LayerStack,
    build_cnet,
    build_dncnn,
    build_model,
    build_unet,
    build_upnet,
    to_unit_range,
)
from utils.checkpoint import read_checkpoint, write_checkpoint
from utils.errors import DimensionError, SpecError
from utils.gradcheck import gradcheck
from utils.tensor import Tensor

# Encoder/decoder ladder summed by hand, frozen as a regression value
UNET_PARAMETERS = 2_524_291


def _z(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> Tensor:
    return Tensor(np.random.default_rng(seed).uniform(0.0, 1.0, spec.input_shape()).astype(dtype))


def test_unet_parameter_count():
    assert build_unet(get_model_spec("unet", 16)).num_parameters() == UNET_PARAMETERS


@pytest.mark.parametrize("arch", ["unet", "u1net", "cnet", "upnet", "dnet"])
def test_generator_output_shape(arch):
    spec = get_model_spec(arch, 32, hidden_width=4)
    out = build_model(spec)(_z(spec))
    assert out.shape == (3, 32, 32)
    assert np.all(np.abs(out.data) <= 1.0)


def test_upnet_and_dnet_consume_sixteenth_size_input():
    for arch in ("upnet", "dnet"):
        spec = get_model_spec(arch, 64, hidden_width=4)
        assert spec.input_shape() == (16, 4, 4)
        assert build_model(spec)(_z(spec)).shape == (3, 64, 64)


def test_batched_forward():
    spec = get_model_spec("cnet", 8, hidden_width=4)
    z = Tensor(np.random.default_rng(0).uniform(size=(2,) + spec.input_shape()).astype(np.float32))
    assert build_model(spec)(z).shape == (2, 3, 8, 8)


@pytest.mark.parametrize("arch,size", [("unet", 24), ("upnet", 40), ("dnet", 8)])
def test_working_size_must_divide_by_sixteen(arch, size):
    with pytest.raises(SpecError):
        get_model_spec(arch, size)


def test_unknown_arch_is_spec_error():
    with pytest.raises(SpecError):
        get_model_spec("resnet", 16)


def test_builder_rejects_foreign_spec():
    with pytest.raises(SpecError):
        build_cnet(get_model_spec("unet", 16))


def test_wrong_input_channels():
    model = build_cnet(get_model_spec("cnet", 8, hidden_width=4))
    with pytest.raises(DimensionError):
        model(Tensor(np.zeros((3, 8, 8), np.float32)))


def test_fixed_seed_forward_is_reproducible():
    spec = get_model_spec("unet", 16, seed=3)
    first = build_unet(spec)(_z(spec, seed=1)).data
    second = build_unet(spec)(_z(spec, seed=1)).data
    assert np.array_equal(first, second)


def test_different_seeds_give_different_weights():
    a = build_cnet(get_model_spec("cnet", 8, seed=0, hidden_width=4)).state_arrays()
    b = build_cnet(get_model_spec("cnet", 8, seed=1, hidden_width=4)).state_arrays()
    assert not np.array_equal(a["conv1.weight"], b["conv1.weight"])


def test_zero_weight_cnet_outputs_tanh_bias():
    model = build_cnet(get_model_spec("cnet", 8, hidden_width=4))
    for name, p in model.parameters().items():
        p.data = np.zeros_like(p.data)
    model.parameters()["conv8.bias"].data = np.array([0.5, -0.25, 0.0], np.float32)
    out = model(_z(model.spec)).data
    for c, b in enumerate([0.5, -0.25, 0.0]):
        assert np.allclose(out[c], np.tanh(b))


def test_upnet_constant_input_is_blockwise_constant():
    spec = get_model_spec("upnet", 32, hidden_width=4)
    z = Tensor(np.full(spec.input_shape(), 0.7, np.float32))
    out = build_upnet(spec)(z).data
    # every 16×16 block repeats the same 16×16 tile, so adjacent blocks match
    assert np.allclose(out[:, :16, :16], out[:, 16:, 16:], atol=1e-6)


def test_dncnn_shape_and_zero_head():
    spec = get_model_spec("dncnn", 8, hidden_width=4, depth=4)
    model = build_dncnn(spec).eval()
    for key in ("conv4.weight", "conv4.bias"):
        model.parameters()[key].data[...] = 0.0
    x = np.random.default_rng(0).uniform(size=(3, 11, 7)).astype(np.float32)
    noise = model(Tensor(x)).data
    assert noise.shape == x.shape
    assert np.array_equal(x - noise, x)


def test_dncnn_depth_and_channel_checks():
    with pytest.raises(SpecError):
        ModelSpec(arch=Arch.DNCNN, in_channels=16, working_size=8)
    with pytest.raises(SpecError):
        ModelSpec(arch=Arch.DNCNN, in_channels=3, working_size=8, depth=1)
    model = build_dncnn(get_model_spec("dncnn", 8, depth=17, hidden_width=4))
    convs = [layer for layer in model.layers if layer.kind.value == "Conv2d"]
    assert len(convs) == 17


def test_state_round_trip_through_checkpoint(tmp_path):
    spec = get_model_spec("cnet", 8, hidden_width=4, seed=5)
    model = build_cnet(spec)
    path = tmp_path / "model.dif"
    write_checkpoint(str(path), "model", {"model_spec": spec.to_dict()}, model.state_arrays())
    meta, arrays = read_checkpoint(str(path))

    clone = build_cnet(replace(ModelSpec.from_dict(meta["model_spec"]), seed=99)).load_state_arrays(arrays)
    assert np.array_equal(clone(_z(spec)).data, model(_z(spec)).data)


def test_load_state_rejects_wrong_shapes():
    small = build_cnet(get_model_spec("cnet", 8, hidden_width=4))
    wide = build_cnet(get_model_spec("cnet", 8, hidden_width=8))
    with pytest.raises(DimensionError):
        small.load_state_arrays(wide.state_arrays())


def test_summary_lists_layers():
    model = build_unet(get_model_spec("unet", 16))
    text = model.summary()
    assert text.splitlines()[0].startswith(ARCH_CONFIGS[Arch.UNET]["name"])
    assert "+skip4" in text
    assert f"{UNET_PARAMETERS:,}" in text


def test_to_unit_range():
    y = Tensor(np.array([-1.0, 0.0, 1.0]))
    assert to_unit_range(y).data.tolist() == [0.0, 0.5, 1.0]


def test_gradcheck_unet_block():
    spec = ModelSpec(arch=Arch.UNET, in_channels=4, working_size=16)
    stack = _LayerStack(seed=2)
    _conv_block(stack, "enc1", 4, 8, 3, 1, save_as="skip1")
    stack.pool("enc1.pool")
    model = Model(spec, stack.layers).to_dtype(np.float64).train()
    x = Tensor(np.random.default_rng(3).standard_normal((4, 8, 8)), requires_grad=True, name="x")
    params = model.parameters()
    weights = np.random.default_rng(4).standard_normal((8, 4, 4))

    inputs = [x, params["enc1.conv1.weight"], params["enc1.bn2.weight"]]
    report = gradcheck(lambda: model(x) * weights, inputs, max_checks=12)
    assert report.passed(1e-6), report.per_input


@pytest.mark.parametrize("arch", ["unet", "u1net", "dnet", "cnet", "upnet"])
def test_gradcheck_end_to_end(arch):
    spec = get_model_spec(arch, 16, hidden_width=4)
    model = build_model(spec).to_dtype(np.float64).train()
    z = Tensor(_z(spec, dtype=np.float64).data, requires_grad=True, name="z")
    params = model.parameters()
    first, last = list(params)[0], list(params)[-2]
    weights = np.random.default_rng(1).standard_normal((3, 16, 16))

    # a 1e-6 step can still straddle an activation kink somewhere in a full net
    report = gradcheck(lambda: model(z) * weights, [z, params[first], params[last]], h=1e-6, max_checks=6)
    assert report.passed(1e-4), report.per_input


@pytest.mark.slow
@pytest.mark.parametrize("arch", ["unet", "u1net", "dnet", "cnet", "upnet"])
def test_gradcheck_end_to_end_at_working_size(arch):
    spec = get_model_spec(arch, 32, hidden_width=4)
    model = build_model(spec).to_dtype(np.float64).train()
    z = Tensor(_z(spec, dtype=np.float64).data, requires_grad=True, name="z")
    params = model.parameters()
    first, last = list(params)[0], list(params)[-2]
    weights = np.random.default_rng(1).standard_normal((3, 32, 32))

    report = gradcheck(lambda: model(z) * weights, [z, params[first], params[last]], max_checks=4)
    assert report.passed(1e-6), report.per_input


def test_gradcheck_reports_small_gradient_errors():
    x = Tensor(np.ones(2), requires_grad=True)
    scale = np.array([1e3, 0.0])
    hidden = np.array([0.0, 3e-3])
    # the second element's 3e-3 slope bypasses the graph, so its analytic gradient is 0
    report = gradcheck(lambda: (x * scale).sum() + Tensor(x.data * hidden).sum(), [x])
    assert report.max_rel_err > 0.5


def test_hidden_width_defaults_per_architecture():
    assert ModelSpec(arch=Arch.DNCNN, in_channels=3, working_size=8).hidden_width == 64
    assert ModelSpec(arch=Arch.CNET, in_channels=16, working_size=8).hidden_width == 32
    assert ModelSpec(arch=Arch.CNET, in_channels=16, working_size=8, hidden_width=4).hidden_width == 4
    spec = ModelSpec(arch=Arch.DNCNN, in_channels=3, working_size=8)
    assert ModelSpec.from_dict(spec.to_dict()) == spec
