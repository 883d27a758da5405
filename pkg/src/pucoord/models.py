"""Built-in IR builders for benchmark-shaped models.

`resnet50_ir()` reproduces the standard ResNet-50 layer list and shapes
(224x224 input, bottleneck v1.5 convention: stride lives in the 3x3 conv).
Only layer shapes matter here; the toolchain is timing-level.
"""

from __future__ import annotations

import math


def _conv(nid, oc, ic, kh, kw, oh, ow, scale=7):
    return {
        "id": nid, "op": "conv",
        "dims": [oc, ic, kh, kw, oh, ow],
        "weight_bytes": oc * ic * kh * kw,
        "bias_bytes": 4 * oc,
        "quant_scale": scale,
    }


def _elt(nid, op, shape):
    return {"id": nid, "op": op, "dims": list(shape), "weight_bytes": 0,
            "bias_bytes": 0, "quant_scale": 0}


def resnet50_ir(input_hw: int = 224, num_classes: int = 1000) -> dict:
    nodes = []
    edges = []

    def edge(src, dst, shape):
        edges.append({"src": src, "dst": dst, "tensor_shape": list(shape)})

    hw = input_hw // 2  # stem conv stride 2
    nodes.append(_conv("conv1", 64, 3, 7, 7, hw, hw))
    edge(None, "conv1", (3, input_hw, input_hw))
    nodes.append(_elt("relu1", "relu", (64, hw, hw)))
    edge("conv1", "relu1", (64, hw, hw))
    hw_pool = hw // 2
    nodes.append(_elt("maxpool", "maxpool", (64, hw_pool, hw_pool)))
    edge("relu1", "maxpool", (64, hw, hw))

    prev = "maxpool"
    in_c = 64
    hw = hw_pool
    stage_cfg = [  # (blocks, mid_channels, out_channels, first_stride)
        (3, 64, 256, 1),
        (4, 128, 512, 2),
        (6, 256, 1024, 2),
        (3, 512, 2048, 2),
    ]
    for si, (blocks, mid, out_c, first_stride) in enumerate(stage_cfg, start=1):
        for bi in range(blocks):
            stride = first_stride if bi == 0 else 1
            out_hw = hw // stride
            p = f"l{si}b{bi}"
            block_in = prev
            block_in_shape = (in_c, hw, hw)

            nodes.append(_conv(f"{p}_conv1", mid, in_c, 1, 1, hw, hw))
            edge(block_in, f"{p}_conv1", block_in_shape)
            nodes.append(_elt(f"{p}_relu1", "relu", (mid, hw, hw)))
            edge(f"{p}_conv1", f"{p}_relu1", (mid, hw, hw))

            nodes.append(_conv(f"{p}_conv2", mid, mid, 3, 3, out_hw, out_hw))
            edge(f"{p}_relu1", f"{p}_conv2", (mid, hw, hw))
            nodes.append(_elt(f"{p}_relu2", "relu", (mid, out_hw, out_hw)))
            edge(f"{p}_conv2", f"{p}_relu2", (mid, out_hw, out_hw))

            nodes.append(_conv(f"{p}_conv3", out_c, mid, 1, 1, out_hw, out_hw))
            edge(f"{p}_relu2", f"{p}_conv3", (mid, out_hw, out_hw))

            if bi == 0:
                nodes.append(_conv(f"{p}_down", out_c, in_c, 1, 1, out_hw, out_hw))
                edge(block_in, f"{p}_down", block_in_shape)
                skip = f"{p}_down"
            else:
                skip = block_in

            nodes.append(_elt(f"{p}_add", "add", (out_c, out_hw, out_hw)))
            edge(f"{p}_conv3", f"{p}_add", (out_c, out_hw, out_hw))
            edge(skip, f"{p}_add", (out_c, out_hw, out_hw))
            nodes.append(_elt(f"{p}_relu3", "relu", (out_c, out_hw, out_hw)))
            edge(f"{p}_add", f"{p}_relu3", (out_c, out_hw, out_hw))

            prev = f"{p}_relu3"
            in_c = out_c
            hw = out_hw

    nodes.append(_elt("avgpool", "avgpool", (in_c,)))
    edge(prev, "avgpool", (in_c, hw, hw))
    nodes.append({
        "id": "fc", "op": "fc", "dims": [num_classes, in_c],
        "weight_bytes": num_classes * in_c, "bias_bytes": 4 * num_classes,
        "quant_scale": 7,
    })
    edge("avgpool", "fc", (in_c,))

    return {"schema_version": 1, "nodes": nodes, "edges": edges}


def two_conv_chain_ir(channels: int = 64, hw: int = 32) -> dict:
    """Minimal producer-consumer model: two 3x3 convs back to back."""
    nodes = [
        _conv("conv_a", channels, channels, 3, 3, hw, hw),
        _conv("conv_b", channels, channels, 3, 3, hw, hw),
    ]
    edges = [
        {"src": None, "dst": "conv_a", "tensor_shape": [channels, hw, hw]},
        {"src": "conv_a", "dst": "conv_b", "tensor_shape": [channels, hw, hw]},
    ]
    return {"schema_version": 1, "nodes": nodes, "edges": edges}


def total_mac_count(ir: dict) -> int:
    """Independent MAC counter over raw IR (pre-fusion)."""
    total = 0
    for n in ir["nodes"]:
        if n["op"] == "conv":
            oc, ic, kh, kw, oh, ow = n["dims"]
            total += oc * ic * kh * kw * oh * ow
        elif n["op"] == "fc":
            out_f, in_f = n["dims"]
            total += out_f * in_f
    return total
