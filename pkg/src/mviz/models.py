"""Small multimodal classifiers: four architectures, training, checkpoints.

Two execution paths on purpose.  Training and bulk prediction run on plain
numpy with hand-derived backprop (orders of magnitude faster than walking the
graph per point).  Analysis builds an explicit computation graph with the same
parameters; a test pins the two forwards together to 1e-12 so the analyzed
function is the deployed function.

Architectures:
  additive     per-modality affine to class scores, summed by a fixed-identity
               final affine; penultimate is the concatenation of the per-
               modality score vectors
  late_fusion  per-modality two-layer softplus MLPs, concatenated, joint final
               affine; still additive across modalities
  bilinear     z_c = x1' W_c x2 per class, identity-initialized final affine;
               two modalities only
  mlp_fusion   concat everything, two softplus layers, final affine

Token modalities are embedded by the model (one table per token modality);
everything downstream sees the embedded vectors.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .data import Dataset, DatasetSchema, MultimodalDatapoint
from .errors import Divergence, InvalidSpec, IoFailure, UnknownLayer

ARCHITECTURES = ("additive", "late_fusion", "bilinear", "mlp_fusion")

CKPT_MAGIC = b"MVIZCKPT1\n"


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 0.05
    batch_size: int = 32
    momentum: float = 0.9
    seed: int = 0
    hidden1: int = 32
    hidden2: int = 16
    embed_dim: int = 4
    activation: str = "softplus"  # or "relu": trainable but not graph-analyzable
    sharpness: float = 10.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainedModel:
    architecture: str
    schema: DatasetSchema
    params: dict[str, np.ndarray]
    config: TrainConfig
    info: dict = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return self.schema.num_classes

    def eff_dim(self, modality: str) -> int:
        m = self.schema.modality(modality)
        return self.config.embed_dim if m.kind == "token" else m.atom_dim

    def flat_dim(self, modality: str) -> int:
        return self.schema.modality(modality).atom_count * self.eff_dim(modality)

    @property
    def penultimate_dim(self) -> int:
        return self.params["W_out"].shape[1]

    @property
    def layer_names(self) -> list[str]:
        names = ["input"]
        if self.architecture == "late_fusion":
            names += [f"hidden_{m}" for m in self.schema.modality_names]
        elif self.architecture == "mlp_fusion":
            names.append("hidden")
        names += ["penultimate", "logits"]
        return names


def _act(cfg: TrainConfig, x: np.ndarray) -> np.ndarray:
    if cfg.activation == "relu":
        return np.maximum(0.0, x)
    k = cfg.sharpness
    return np.logaddexp(0.0, k * x) / k


def _dact(cfg: TrainConfig, x: np.ndarray) -> np.ndarray:
    if cfg.activation == "relu":
        return (x > 0.0).astype(np.float64)
    return expit(cfg.sharpness * x)


def init_model(architecture: str, schema: DatasetSchema, config: TrainConfig | None = None) -> TrainedModel:
    if architecture not in ARCHITECTURES:
        raise InvalidSpec(f"unknown architecture {architecture!r}")
    cfg = config or TrainConfig()
    if cfg.activation not in ("softplus", "relu"):
        raise InvalidSpec(f"unknown activation {cfg.activation!r}")
    rng = np.random.default_rng(cfg.seed)
    C = schema.num_classes
    mods = schema.modality_names
    model = TrainedModel(architecture, schema, {}, cfg)
    p = model.params
    for m in schema.modalities:
        if m.kind == "token":
            p[f"emb_{m.name}"] = rng.normal(0.0, 0.5, size=(m.vocab_size, cfg.embed_dim))
    dims = {m: model.flat_dim(m) for m in mods}
    if architecture == "additive":
        for m in mods:
            p[f"W_{m}"] = rng.normal(0.0, 1.0, size=(C, dims[m])) / np.sqrt(dims[m])
            p[f"b_{m}"] = np.zeros(C)
        p["W_out"] = np.concatenate([np.eye(C)] * len(mods), axis=1)
        p["b_out"] = np.zeros(C)
    elif architecture == "late_fusion":
        h1, h2 = cfg.hidden1, cfg.hidden2
        for m in mods:
            p[f"W1_{m}"] = rng.normal(0.0, 1.0, size=(h1, dims[m])) / np.sqrt(dims[m])
            p[f"b1_{m}"] = np.zeros(h1)
            p[f"W2_{m}"] = rng.normal(0.0, 1.0, size=(h2, h1)) / np.sqrt(h1)
            p[f"b2_{m}"] = np.zeros(h2)
        P = h2 * len(mods)
        p["W_out"] = rng.normal(0.0, 1.0, size=(C, P)) / np.sqrt(P)
        p["b_out"] = np.zeros(C)
    elif architecture == "bilinear":
        if len(mods) != 2:
            raise InvalidSpec("bilinear needs exactly two modalities")
        d1, d2 = dims[mods[0]], dims[mods[1]]
        p["W_bil"] = rng.normal(0.0, 1.0, size=(C, d1, d2)) / np.sqrt(d1 * d2)
        p["W_out"] = np.eye(C)
        p["b_out"] = np.zeros(C)
    else:  # mlp_fusion
        D = sum(dims.values())
        h1, h2 = cfg.hidden1, cfg.hidden2
        p["W1"] = rng.normal(0.0, 1.0, size=(h1, D)) / np.sqrt(D)
        p["b1"] = np.zeros(h1)
        p["W2"] = rng.normal(0.0, 1.0, size=(h2, h1)) / np.sqrt(h1)
        p["b2"] = np.zeros(h2)
        p["W_out"] = rng.normal(0.0, 1.0, size=(C, h2)) / np.sqrt(h2)
        p["b_out"] = np.zeros(C)
    return model


# ---- presentation: raw atoms -> flat float vectors -------------------------


def present_batch(model: TrainedModel, raw: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Map raw stacked atoms (N, atoms, dim) to flat (N, atoms*eff_dim)."""
    out = {}
    for m in model.schema.modalities:
        x = raw[m.name]
        N = x.shape[0]
        if m.kind == "token":
            ids = x.reshape(N, m.atom_count).astype(np.int64)
            emb = model.params[f"emb_{m.name}"]
            out[m.name] = emb[ids].reshape(N, -1)
        else:
            out[m.name] = x.reshape(N, -1)
    return out


def present_point(model: TrainedModel, dp: MultimodalDatapoint) -> dict[str, np.ndarray]:
    raw = {k: v[None, ...] for k, v in dp.modalities.items()}
    return {k: v[0] for k, v in present_batch(model, raw).items()}


def _dataset_raw(ds: Dataset) -> dict[str, np.ndarray]:
    return {m: ds.stacked(m) for m in ds.schema.modality_names}


# ---- numpy forward / backward ---------------------------------------------


def forward_batch(model: TrainedModel, X: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """All named layer activations for presented input X (modality -> (N, D_m))."""
    p, cfg = model.params, model.config
    mods = model.schema.modality_names
    acts: dict[str, np.ndarray] = {"input": np.concatenate([X[m] for m in mods], axis=1)}
    if model.architecture == "additive":
        scores = [X[m] @ p[f"W_{m}"].T + p[f"b_{m}"] for m in mods]
        acts["penultimate"] = np.concatenate(scores, axis=1)
    elif model.architecture == "late_fusion":
        hs = []
        for m in mods:
            a1 = X[m] @ p[f"W1_{m}"].T + p[f"b1_{m}"]
            h1 = _act(cfg, a1)
            a2 = h1 @ p[f"W2_{m}"].T + p[f"b2_{m}"]
            h2 = _act(cfg, a2)
            acts[f"pre_hidden_{m}"] = a2
            acts[f"pre1_{m}"] = a1
            acts[f"h1_{m}"] = h1
            acts[f"hidden_{m}"] = h2
            hs.append(h2)
        acts["penultimate"] = np.concatenate(hs, axis=1)
    elif model.architecture == "bilinear":
        X1, X2 = X[mods[0]], X[mods[1]]
        acts["penultimate"] = np.einsum("ni,cij,nj->nc", X1, p["W_bil"], X2)
    else:
        a1 = acts["input"] @ p["W1"].T + p["b1"]
        h1 = _act(cfg, a1)
        a2 = h1 @ p["W2"].T + p["b2"]
        acts["pre1"] = a1
        acts["hidden"] = h1
        acts["pre2"] = a2
        acts["penultimate"] = _act(cfg, a2)
    acts["logits"] = acts["penultimate"] @ p["W_out"].T + p["b_out"]
    return acts


def backward_batch(
    model: TrainedModel,
    X: dict[str, np.ndarray],
    acts: dict[str, np.ndarray],
    dlogits: np.ndarray,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Parameter grads and presented-input grads for mean-reduced loss."""
    p, cfg = model.params, model.config
    mods = model.schema.modality_names
    grads: dict[str, np.ndarray] = {}
    pen = acts["penultimate"]
    grads["W_out"] = dlogits.T @ pen
    grads["b_out"] = dlogits.sum(axis=0)
    dpen = dlogits @ p["W_out"]
    dX: dict[str, np.ndarray] = {}
    if model.architecture == "additive":
        C = model.num_classes
        for i, m in enumerate(mods):
            ds = dpen[:, i * C : (i + 1) * C]
            grads[f"W_{m}"] = ds.T @ X[m]
            grads[f"b_{m}"] = ds.sum(axis=0)
            dX[m] = ds @ p[f"W_{m}"]
    elif model.architecture == "late_fusion":
        h2s = [acts[f"hidden_{m}"].shape[1] for m in mods]
        off = 0
        for m, width in zip(mods, h2s):
            dh2 = dpen[:, off : off + width]
            off += width
            da2 = dh2 * _dact(cfg, acts[f"pre_hidden_{m}"])
            grads[f"W2_{m}"] = da2.T @ acts[f"h1_{m}"]
            grads[f"b2_{m}"] = da2.sum(axis=0)
            dh1 = da2 @ p[f"W2_{m}"]
            da1 = dh1 * _dact(cfg, acts[f"pre1_{m}"])
            grads[f"W1_{m}"] = da1.T @ X[m]
            grads[f"b1_{m}"] = da1.sum(axis=0)
            dX[m] = da1 @ p[f"W1_{m}"]
    elif model.architecture == "bilinear":
        X1, X2 = X[mods[0]], X[mods[1]]
        W = p["W_bil"]
        grads["W_bil"] = np.einsum("nc,ni,nj->cij", dpen, X1, X2)
        dX[mods[0]] = np.einsum("nc,cij,nj->ni", dpen, W, X2)
        dX[mods[1]] = np.einsum("nc,cij,ni->nj", dpen, W, X1)
    else:
        da2 = dpen * _dact(cfg, acts["pre2"])
        grads["W2"] = da2.T @ acts["hidden"]
        grads["b2"] = da2.sum(axis=0)
        dh1 = da2 @ p["W2"]
        da1 = dh1 * _dact(cfg, acts["pre1"])
        grads["W1"] = da1.T @ acts["input"]
        grads["b1"] = da1.sum(axis=0)
        dfull = da1 @ p["W1"]
        off = 0
        for m in mods:
            width = model.flat_dim(m)
            dX[m] = dfull[:, off : off + width]
            off += width
    # embeddings: scatter presented-input grads back onto the rows used
    for m in model.schema.modalities:
        if m.kind == "token":
            name = m.name
            raw_ids = X[f"_ids_{name}"] if f"_ids_{name}" in X else None
            if raw_ids is not None:
                demb = np.zeros_like(p[f"emb_{name}"])
                dx = dX[name].reshape(raw_ids.shape[0], m.atom_count, cfg.embed_dim)
                np.add.at(demb, raw_ids, dx)
                grads[f"emb_{name}"] = demb
    return grads, dX


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_logits(model: TrainedModel, ds_or_raw) -> np.ndarray:
    raw = _dataset_raw(ds_or_raw) if isinstance(ds_or_raw, Dataset) else ds_or_raw
    X = present_batch(model, raw)
    return forward_batch(model, X)["logits"]


def predict_labels(model: TrainedModel, ds_or_raw) -> np.ndarray:
    return np.argmax(predict_logits(model, ds_or_raw), axis=1)


def predict_point_logits(model: TrainedModel, dp: MultimodalDatapoint) -> np.ndarray:
    raw = {k: v[None, ...] for k, v in dp.modalities.items()}
    return predict_logits(model, raw)[0]


def layer_activation_batch(model: TrainedModel, ds: Dataset, layer: str) -> np.ndarray:
    if layer not in model.layer_names:
        raise UnknownLayer(f"model has no layer {layer!r}; choose from {model.layer_names}")
    X = present_batch(model, _dataset_raw(ds))
    return forward_batch(model, X)[layer]


def accuracy(model: TrainedModel, ds: Dataset) -> float:
    return float(np.mean(predict_labels(model, ds) == ds.labels()))


# ---- training --------------------------------------------------------------


def train_model(
    architecture: str,
    train: Dataset,
    val: Dataset | None = None,
    config: TrainConfig | None = None,
) -> TrainedModel:
    """SGD with momentum on softmax cross-entropy.  Seeded and deterministic."""
    cfg = config or TrainConfig()
    train.validate()
    model = init_model(architecture, train.schema, cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    raw = _dataset_raw(train)
    y = train.labels()
    N = len(train)
    C = model.num_classes
    onehot = np.eye(C)[y]
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    token_mods = [m for m in model.schema.modalities if m.kind == "token"]
    losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(N)
        epoch_loss = 0.0
        for start in range(0, N, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch_raw = {k: v[idx] for k, v in raw.items()}
            X = present_batch(model, batch_raw)
            for m in token_mods:
                X[f"_ids_{m.name}"] = batch_raw[m.name].reshape(len(idx), m.atom_count).astype(np.int64)
            acts = forward_batch(model, X)
            logits = acts["logits"]
            probs = softmax(logits)
            # cross-entropy via log-sum-exp so a blown-up model shows up as a
            # blown-up loss instead of being clamped
            shift = logits - logits.max(axis=1, keepdims=True)
            logprob = shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))
            batch_loss = -np.mean(logprob[np.arange(len(idx)), y[idx]])
            epoch_loss += batch_loss * len(idx)
            dlogits = (probs - onehot[idx]) / len(idx)
            grads, _ = backward_batch(model, X, acts, dlogits)
            for k, g in grads.items():
                velocity[k] = cfg.momentum * velocity[k] - cfg.lr * g
                model.params[k] = model.params[k] + velocity[k]
        epoch_loss /= N
        if not np.isfinite(epoch_loss) or epoch_loss > 1e6:
            raise Divergence(f"training loss became {epoch_loss}")
        losses.append(float(epoch_loss))
    model.info = {
        "train_accuracy": accuracy(model, train),
        "val_accuracy": accuracy(model, val) if val is not None else None,
        "final_loss": losses[-1] if losses else None,
        "epochs": cfg.epochs,
    }
    return model


def fine_tune_last_layer(
    model: TrainedModel,
    points: Dataset,
    epochs: int = 1,
    lr: float = 1e-2,
    batch_size: int = 32,
    seed: int = 0,
) -> TrainedModel:
    """Retrain only the final affine; features are computed once, never per step."""
    points.validate()
    X = present_batch(model, _dataset_raw(points))
    pen = forward_batch(model, X)["penultimate"]
    y = points.labels()
    C = model.num_classes
    onehot = np.eye(C)[y]
    W = model.params["W_out"].copy()
    b = model.params["b_out"].copy()
    vW, vb = np.zeros_like(W), np.zeros_like(b)
    rng = np.random.default_rng(seed)
    N = len(points)
    for _ in range(epochs):
        order = rng.permutation(N)
        for start in range(0, N, batch_size):
            idx = order[start : start + batch_size]
            logits = pen[idx] @ W.T + b
            probs = softmax(logits)
            dlogits = (probs - onehot[idx]) / len(idx)
            gW = dlogits.T @ pen[idx]
            gb = dlogits.sum(axis=0)
            vW = 0.9 * vW - lr * gW
            vb = 0.9 * vb - lr * gb
            W = W + vW
            b = b + vb
            if not np.all(np.isfinite(W)):
                raise Divergence("fine-tuning diverged")
    new_params = {k: v for k, v in model.params.items()}
    new_params["W_out"] = W
    new_params["b_out"] = b
    info = dict(model.info)
    info["fine_tuned"] = {"epochs": epochs, "lr": lr, "n_points": N}
    return TrainedModel(model.architecture, model.schema, new_params, model.config, info)


# ---- graph building --------------------------------------------------------


@dataclass
class GraphModel:
    """The model as an explicit graph: input slot per modality (flattened)."""

    graph: ad.CompGraph
    logits: int
    layers: dict[str, int]  # layer name -> node id

    def bindings(self, model: TrainedModel, dp: MultimodalDatapoint) -> dict[str, np.ndarray]:
        pres = present_point(model, dp)
        return {k: v.reshape(-1) for k, v in pres.items()}


def build_graph(model: TrainedModel) -> GraphModel:
    if model.config.activation != "softplus":
        raise InvalidSpec("only softplus models are graph-analyzable; retrain with softplus")
    g = ad.CompGraph()
    p = model.params
    cfg = model.config
    mods = model.schema.modality_names
    slots = {m: g.input(m, (model.flat_dim(m),)) for m in mods}
    layers: dict[str, int] = {"input": g.concat([slots[m] for m in mods])}
    if model.architecture == "additive":
        scores = [g.affine(g.const(p[f"W_{m}"]), slots[m], g.const(p[f"b_{m}"])) for m in mods]
        pen = g.concat(scores)
    elif model.architecture == "late_fusion":
        hs = []
        for m in mods:
            h1 = g.softplus(g.affine(g.const(p[f"W1_{m}"]), slots[m], g.const(p[f"b1_{m}"])), cfg.sharpness)
            h2 = g.softplus(g.affine(g.const(p[f"W2_{m}"]), h1, g.const(p[f"b2_{m}"])), cfg.sharpness)
            layers[f"hidden_{m}"] = h2
            hs.append(h2)
        pen = g.concat(hs)
    elif model.architecture == "bilinear":
        x1, x2 = slots[mods[0]], slots[mods[1]]
        zs = []
        one = g.const(np.ones(1))
        for c in range(model.num_classes):
            wc = g.const(p["W_bil"][c])
            zc = g.matmul(x1, g.matmul(wc, x2))
            zs.append(g.mul(one, zc))  # lift the scalar to a length-1 vector
        pen = g.concat(zs)
    else:
        x = layers["input"]
        h1 = g.softplus(g.affine(g.const(p["W1"]), x, g.const(p["b1"])), cfg.sharpness)
        layers["hidden"] = h1
        pen = g.softplus(g.affine(g.const(p["W2"]), h1, g.const(p["b2"])), cfg.sharpness)
    layers["penultimate"] = pen
    logits = g.affine(g.const(p["W_out"]), pen, g.const(p["b_out"]))
    layers["logits"] = logits
    return GraphModel(g, logits, layers)


# ---- checkpoint io ---------------------------------------------------------


def checkpoint_bytes(model: TrainedModel) -> bytes:
    """Deterministic binary checkpoint: JSON header line, then raw float64 data."""
    names = sorted(model.params)
    header = {
        "architecture": model.architecture,
        "schema": model.schema.to_dict(),
        "config": model.config.to_dict(),
        "info": model.info,
        "params": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
    }
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(json.dumps(header, sort_keys=True).encode())
    buf.write(b"\n")
    for n in names:
        buf.write(np.ascontiguousarray(model.params[n], dtype=np.float64).tobytes())
    return buf.getvalue()


def save_model(model: TrainedModel, path: str) -> None:
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "wb") as f:
            f.write(checkpoint_bytes(model))
    except OSError as e:
        raise IoFailure(f"cannot write checkpoint {path}: {e}") from e


def load_model(path: str) -> TrainedModel:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise IoFailure(f"cannot read checkpoint {path}: {e}") from e
    if not blob.startswith(CKPT_MAGIC):
        raise IoFailure(f"{path} is not a model checkpoint")
    try:
        nl = blob.index(b"\n", len(CKPT_MAGIC))
        header = json.loads(blob[len(CKPT_MAGIC) : nl].decode())
        schema = DatasetSchema.from_dict(header["schema"])
        cfg = TrainConfig(**header["config"])
        params: dict[str, np.ndarray] = {}
        off = nl + 1
        for spec in header["params"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            end = off + count * 8
            params[spec["name"]] = np.frombuffer(blob[off:end], dtype=np.float64).reshape(shape).copy()
            off = end
        if off != len(blob):
            raise IoFailure(f"{path}: trailing bytes in checkpoint")
        return TrainedModel(header["architecture"], schema, params, cfg, header.get("info", {}))
    except (KeyError, ValueError, json.JSONDecodeError) as e:
        raise IoFailure(f"{path}: corrupt checkpoint: {e}") from e


def model_digest(model_or_path) -> str:
    """Content hash of a model, equal for a TrainedModel and its saved file."""
    if isinstance(model_or_path, TrainedModel):
        return hashlib.sha256(checkpoint_bytes(model_or_path)).hexdigest()
    try:
        with open(model_or_path, "rb") as f:
            return hashlib.sha256(f.read()).hexdigest()
    except OSError as e:
        raise IoFailure(f"cannot read {model_or_path}: {e}") from e
