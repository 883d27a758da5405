"""Shared export helpers.

The exporter in torch unconditionally imports the ``onnx`` package for an
optional pass that injects custom-op function bodies into the serialized
model.  None of the models here use custom ops, so when ``onnx`` is not
installed we satisfy that import with a stub whose scan sees an empty
graph and leaves the serialized bytes untouched.
"""

import sys
import types

import pytest


def _install_onnx_stub():
    if "onnx" in sys.modules:
        return
    try:
        import onnx                                    # noqa: F401
        return
    except ImportError:
        pass
    import importlib.machinery

    stub = types.ModuleType("onnx")
    stub.__spec__ = importlib.machinery.ModuleSpec("onnx", loader=None)

    class _EmptyModel:
        def __init__(self):
            self.graph = types.SimpleNamespace(node=[])
            self.functions = []

    stub.load_model_from_string = lambda _bytes: _EmptyModel()
    sys.modules["onnx"] = stub


@pytest.fixture(scope="session")
def export_onnx(tmp_path_factory):
    """Export a torch module to an ONNX file, returning its path."""
    torch = pytest.importorskip("torch")
    _install_onnx_stub()
    out_dir = tmp_path_factory.mktemp("onnx_models")

    def _export(module, input_shape, name):
        path = out_dir / f"{name}.onnx"
        if not path.exists():
            module.eval()
            x = torch.randn(*input_shape)
            torch.onnx.export(module, x, str(path), dynamo=False)
        return str(path)

    return _export


@pytest.fixture(scope="session")
def resnet50_onnx(export_onnx):
    torchvision = pytest.importorskip("torchvision")
    model = torchvision.models.resnet50(weights=None)
    return export_onnx(model, (1, 3, 224, 224), "resnet50")
