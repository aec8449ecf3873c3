"""Model architectures and loss terms.

Four inner-model variants share one body (two affine encoder layers, two
affine decoder layers, tanh hidden activations):

  baseline  plain autoencoder, latent width from the rounded intrinsic
            dimension, reconstruction loss only
  pi-ae     same, plus a second-order penalty tying each latent pair
            (position, finite-difference momentum)
  pi-vae    variational, latent width 10, loss beta * recon + KL + pairing
  hpi-vae   pi-vae plus an energy head whose input gradients enter a
            Hamilton-equation residual

Latent pairing convention: for even latent width L, positions are
z[:, :L/2] and momenta z[:, L/2:], so q_i = z[i] and p_i = z[L/2 + i].
The convention is recorded in every checkpoint sidecar.

The outer model is a convolutional autoencoder over two stacked frames:
five stride-2 convolutions, an affine head onto a tanh-bounded 64-wide
latent, then the mirrored transposed-convolution stack with a final
sigmoid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import load_params, save_params
from .errors import ContractError, DimensionError
from .rng import Rng
from .tensor import Node, Tensor

VARIANTS = ("baseline", "pi-ae", "pi-vae", "hpi-vae")
VARIATIONAL = ("pi-vae", "hpi-vae")

OUTER_LATENT = 64
VAE_LATENT = 10
INNER_HIDDEN = 32
HNN_HIDDEN = 64
LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0


def glorot_uniform(rng: Rng, fan_in: int, fan_out: int) -> Node:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return T.param(Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out))))


def affine_layer(rng: Rng, fan_in: int, fan_out: int):
    return glorot_uniform(rng, fan_in, fan_out), T.param(Tensor.zeros(fan_out))


# ---------------------------------------------------------------------------
# inner models


@dataclass
class InnerModel:
    variant: str
    latent_dim: int
    enc1: tuple
    enc2: tuple
    dec1: tuple
    dec2: tuple
    input_dim: int = OUTER_LATENT

    @property
    def variational(self) -> bool:
        return self.variant in VARIATIONAL

    def params(self) -> dict:
        out = {}
        for name, (w, b) in (("enc1", self.enc1), ("enc2", self.enc2),
                             ("dec1", self.dec1), ("dec2", self.dec2)):
            out[f"{name}.w"] = w
            out[f"{name}.b"] = b
        return out


def init_inner(variant: str, latent_dim: int, rng: Rng,
               input_dim: int = OUTER_LATENT) -> InnerModel:
    if variant not in VARIANTS:
        raise ContractError(f"unknown variant {variant!r}")
    if variant in VARIATIONAL:
        latent_dim = VAE_LATENT
    if variant != "baseline" and latent_dim % 2:
        raise ContractError(f"{variant} needs an even latent width, "
                            f"got {latent_dim}")
    enc_out = 2 * latent_dim if variant in VARIATIONAL else latent_dim
    return InnerModel(
        variant=variant, latent_dim=latent_dim, input_dim=input_dim,
        enc1=affine_layer(rng, input_dim, INNER_HIDDEN),
        enc2=affine_layer(rng, INNER_HIDDEN, enc_out),
        dec1=affine_layer(rng, latent_dim, INNER_HIDDEN),
        dec2=affine_layer(rng, INNER_HIDDEN, input_dim))


def _affine(x, layer):
    w, b = layer
    return T.add_bias(T.matmul(x, w), b)


def encode(model: InnerModel, y):
    """Encoder output: latent code, or (mu, logvar) when variational."""
    h = T.tanh(_affine(y, model.enc1))
    out = _affine(h, model.enc2)
    if not model.variational:
        return out
    mu = T.slice_cols(out, 0, model.latent_dim)
    logvar = T.clamp(T.slice_cols(out, model.latent_dim, 2 * model.latent_dim),
                     LOGVAR_MIN, LOGVAR_MAX)
    return mu, logvar


def decode(model: InnerModel, z):
    h = T.tanh(_affine(z, model.dec1))
    return _affine(h, model.dec2)


def reparameterize(mu, logvar, eps):
    """z = mu + exp(logvar/2) * eps; gradient flows through mu and logvar."""
    if isinstance(eps, Node):
        eps = eps.value
    sigma = T.exp(T.scale(logvar, 0.5))
    return T.add(mu, T.mul(sigma, T.constant(eps)))


# ---------------------------------------------------------------------------
# energy head


@dataclass
class HnnHead:
    layers: list  # [(W, b)] tanh MLP, scalar output

    def params(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(self.layers):
            out[f"hnn{i}.w"] = w
            out[f"hnn{i}.b"] = b
        return out


def init_hnn(latent_dim: int, rng: Rng) -> HnnHead:
    return HnnHead(layers=[affine_layer(rng, latent_dim, HNN_HIDDEN),
                           affine_layer(rng, HNN_HIDDEN, HNN_HIDDEN),
                           affine_layer(rng, HNN_HIDDEN, 1)])


def hnn_energy(head: HnnHead, z):
    """Scalar energy per row."""
    return T.mlp_forward(head.layers, z)


# ---------------------------------------------------------------------------
# loss terms


def reconstruction_loss(pred, target):
    """Mean squared error over all elements."""
    return T.mean_all(T.square(T.sub(pred, target)))


def kl_divergence(mu, logvar):
    """KL(q || N(0, I)) for a diagonal Gaussian, averaged over the batch."""
    mu_a = mu.value.data if isinstance(mu, Node) else np.asarray(mu)
    lv_a = logvar.value.data if isinstance(logvar, Node) else np.asarray(logvar)
    if mu_a.shape != lv_a.shape:
        raise DimensionError(f"kl: mu {mu_a.shape} vs logvar {lv_a.shape}")
    batch = mu_a.shape[0] if mu_a.ndim == 2 else 1
    # 1/2 sum_i (mu^2 + sigma^2 - logvar - 1), mean over batch
    terms = T.sub(T.add(T.square(mu), T.exp(logvar)),
                  T.shift(logvar, 1.0))
    return T.scale(T.sum_all(terms), 0.5 / batch)


def _split_pairs(z, width):
    if width % 2:
        raise ContractError(f"latent width {width} is odd; cannot pair (q, p)")
    half = width // 2
    return T.slice_cols(z, 0, half), T.slice_cols(z, half, width)


def second_order_penalty(z_t, z_next, dt: float = 1.0):
    """Mean over pairs of (p_i(t) - (q_i(t+1) - q_i(t)) / dt)^2."""
    width = (z_t.value if isinstance(z_t, Node) else z_t).shape[-1]
    q_t, p_t = _split_pairs(z_t, width)
    q_next, _ = _split_pairs(z_next, width)
    qdot = T.scale(T.sub(q_next, q_t), 1.0 / dt)
    return T.mean_all(T.square(T.sub(p_t, qdot)))


def hamilton_residual(head: HnnHead, z_t, z_next, dt: float = 1.0,
                      at_midpoint: bool = False):
    """Hamilton-equation residual with gradients from the energy head.

    With (g_q, g_p) the input gradient of the head split by the pairing
    convention, returns mean((dq/dt - g_p)^2) + mean((dp/dt + g_q)^2).
    Differentiable with respect to head and encoder parameters.
    """
    width = (z_t.value if isinstance(z_t, Node) else z_t).shape[-1]
    head_in = head.layers[0][0].value.shape[0]
    if head_in != width:
        raise DimensionError(f"head expects width {head_in}, got {width}")
    where = z_t
    if at_midpoint:
        where = T.scale(T.add(z_t, z_next), 0.5)
    grad = T.input_gradient(head.layers, where)
    g_q, g_p = _split_pairs(grad, width)
    q_t, p_t = _split_pairs(z_t, width)
    q_next, p_next = _split_pairs(z_next, width)
    qdot = T.scale(T.sub(q_next, q_t), 1.0 / dt)
    pdot = T.scale(T.sub(p_next, p_t), 1.0 / dt)
    return T.add(T.mean_all(T.square(T.sub(qdot, g_p))),
                 T.mean_all(T.square(T.add(pdot, g_q))))


def total_loss(model: InnerModel, y_t, y_next=None, head: HnnHead = None,
               beta: float = 1.0, eps=None, so_dt: float = 1.0,
               hamilton_at_midpoint: bool = False):
    """Variant-dispatched loss; returns (loss node, term breakdown).

    Baseline: recon. pi-ae: recon + pairing. pi-vae: beta*recon + KL +
    pairing. hpi-vae: adds the Hamilton residual. All non-beta weights
    are 1. Variants with pairing terms require the consecutive batch
    y_next; pairing and Hamilton terms use posterior means.
    """
    variant = model.variant
    needs_pairs = variant != "baseline"
    if needs_pairs and y_next is None:
        raise ContractError(f"{variant} needs consecutive-sample batches")
    terms = {}
    if not model.variational:
        z_t = encode(model, y_t)
        recon = reconstruction_loss(decode(model, z_t), y_t)
        terms["recon"] = float(recon.value.item())
        if variant == "baseline":
            return recon, terms
        z_next = encode(model, y_next)
        so = second_order_penalty(z_t, z_next, so_dt)
        terms["second_order"] = float(so.value.item())
        loss = T.add(recon, so)
        terms["total"] = float(loss.value.item())
        return loss, terms

    mu_t, logvar_t = encode(model, y_t)
    if eps is None:
        eps = np.zeros(mu_t.value.shape)
    z = reparameterize(mu_t, logvar_t, eps)
    recon = reconstruction_loss(decode(model, z), y_t)
    kl = kl_divergence(mu_t, logvar_t)
    mu_next, _ = encode(model, y_next)
    so = second_order_penalty(mu_t, mu_next, so_dt)
    loss = T.add(T.add(T.scale(recon, beta), kl), so)
    terms["recon"] = float(recon.value.item())
    terms["kl"] = float(kl.value.item())
    terms["second_order"] = float(so.value.item())
    if variant == "hpi-vae":
        if head is None:
            raise ContractError("hpi-vae needs an energy head")
        ham = hamilton_residual(head, mu_t, mu_next, so_dt,
                                hamilton_at_midpoint)
        loss = T.add(loss, ham)
        terms["hamilton"] = float(ham.value.item())
    terms["total"] = float(loss.value.item())
    return loss, terms


# ---------------------------------------------------------------------------
# outer convolutional autoencoder


OUTER_CHANNELS = (8, 16, 32, 64, 64)


@dataclass
class OuterAE:
    geometry: tuple            # (channels, height, width) of ONE frame
    enc_convs: list            # [(W[Co,Ci,3,3], b[Co])]
    enc_fc: tuple
    dec_fc: tuple
    dec_convs: list            # [(W[Ci,Co,3,3], b[Co])]
    bottleneck: tuple          # (C, H, W) after the conv stack

    def params(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(self.enc_convs):
            out[f"enc_conv{i}.w"] = w
            out[f"enc_conv{i}.b"] = b
        out["enc_fc.w"], out["enc_fc.b"] = self.enc_fc
        out["dec_fc.w"], out["dec_fc.b"] = self.dec_fc
        for i, (w, b) in enumerate(self.dec_convs):
            out[f"dec_conv{i}.w"] = w
            out[f"dec_conv{i}.b"] = b
        return out


def _conv_layer(rng: Rng, ci: int, co: int, transposed: bool = False):
    fan_in = ci * 9
    fan_out = co * 9
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    shape = (ci, co, 3, 3) if transposed else (co, ci, 3, 3)
    w = T.param(Tensor(rng.uniform(-bound, bound, size=shape)))
    return w, T.param(Tensor.zeros(co))


def init_outer(frame_channels: int, height: int, width: int, rng: Rng) -> OuterAE:
    """Five stride-2 convolutions each way around a 64-wide latent."""
    in_ch = 2 * frame_channels  # two stacked frames
    chans = (in_ch,) + OUTER_CHANNELS
    enc = [_conv_layer(rng, chans[i], chans[i + 1]) for i in range(5)]
    h, w = height, width
    for _ in range(5):
        h = (h - 1) // 2 + 1
        w = (w - 1) // 2 + 1
    flat = OUTER_CHANNELS[-1] * h * w
    enc_fc = affine_layer(rng, flat, OUTER_LATENT)
    dec_fc = affine_layer(rng, OUTER_LATENT, flat)
    dec_chans = tuple(reversed(chans))
    dec = [_conv_layer(rng, dec_chans[i], dec_chans[i + 1], transposed=True)
           for i in range(5)]
    return OuterAE(geometry=(frame_channels, height, width),
                   enc_convs=enc, enc_fc=enc_fc, dec_fc=dec_fc,
                   dec_convs=dec, bottleneck=(OUTER_CHANNELS[-1], h, w))


def outer_forward(model: OuterAE, x):
    """(latent[B, 64], prediction[B, 2C, H, W]); input may omit the batch axis."""
    a = x.value.data if isinstance(x, Node) else np.asarray(x)
    squeeze = a.ndim == 3
    if squeeze:
        x = T.reshape(x, (1,) + tuple(a.shape))
    shape = x.value.shape if isinstance(x, Node) else x.shape
    c, hh, ww = model.geometry
    if tuple(shape[1:]) != (2 * c, hh, ww):
        raise ContractError(f"outer input {shape[1:]} != {(2 * c, hh, ww)}")
    b = shape[0]
    h = x
    for w_, b_ in model.enc_convs:
        h = T.tanh(T.add_channel_bias(T.conv2d(h, w_, stride=2, padding=1), b_))
    h = T.reshape(h, (b, -1))
    latent = T.tanh(_affine(h, model.enc_fc))
    h = T.tanh(_affine(latent, model.dec_fc))
    h = T.reshape(h, (b,) + model.bottleneck)
    last = len(model.dec_convs) - 1
    for i, (w_, b_) in enumerate(model.dec_convs):
        h = T.add_channel_bias(
            T.conv2d_transpose(h, w_, stride=2, padding=1, output_padding=1), b_)
        h = T.sigmoid(h) if i == last else T.tanh(h)
    if squeeze:
        latent = T.reshape(latent, (OUTER_LATENT,))
        h = T.reshape(h, tuple(a.shape))
    return latent, h


# ---------------------------------------------------------------------------
# checkpoint wrappers


def save_inner(path, model: InnerModel, extra: dict = None) -> None:
    save_params(path, model.params())
    sidecar = {
        "kind": "inner",
        "variant": model.variant,
        "latent_dim": model.latent_dim,
        "input_dim": model.input_dim,
        "pairing": "q=z[:L/2], p=z[L/2:]",
    }
    sidecar.update(extra or {})
    with open(str(path) + ".json", "w") as f:
        json.dump(sidecar, f, indent=2)


def load_inner(path) -> InnerModel:
    with open(str(path) + ".json") as f:
        side = json.load(f)
    t = load_params(path)
    as_param = {k: T.param(v) for k, v in t.items()}
    return InnerModel(
        variant=side["variant"], latent_dim=side["latent_dim"],
        input_dim=side.get("input_dim", OUTER_LATENT),
        enc1=(as_param["enc1.w"], as_param["enc1.b"]),
        enc2=(as_param["enc2.w"], as_param["enc2.b"]),
        dec1=(as_param["dec1.w"], as_param["dec1.b"]),
        dec2=(as_param["dec2.w"], as_param["dec2.b"]))


def save_hnn(path, head: HnnHead) -> None:
    save_params(path, head.params())


def load_hnn(path) -> HnnHead:
    t = load_params(path)
    layers = []
    for i in range(len(t) // 2):
        layers.append((T.param(t[f"hnn{i}.w"]), T.param(t[f"hnn{i}.b"])))
    return HnnHead(layers=layers)


def save_outer(path, model: OuterAE) -> None:
    save_params(path, model.params())
    c, h, w = model.geometry
    with open(str(path) + ".json", "w") as f:
        json.dump({"kind": "outer", "channels": c, "height": h, "width": w},
                  f, indent=2)


def load_outer(path) -> OuterAE:
    with open(str(path) + ".json") as f:
        side = json.load(f)
    t = load_params(path)
    as_param = {k: T.param(v) for k, v in t.items()}
    enc = [(as_param[f"enc_conv{i}.w"], as_param[f"enc_conv{i}.b"])
           for i in range(5)]
    dec = [(as_param[f"dec_conv{i}.w"], as_param[f"dec_conv{i}.b"])
           for i in range(5)]
    h, w = side["height"], side["width"]
    for _ in range(5):
        h = (h - 1) // 2 + 1
        w = (w - 1) // 2 + 1
    return OuterAE(geometry=(side["channels"], side["height"], side["width"]),
                   enc_convs=enc,
                   enc_fc=(as_param["enc_fc.w"], as_param["enc_fc.b"]),
                   dec_fc=(as_param["dec_fc.w"], as_param["dec_fc.b"]),
                   dec_convs=dec, bottleneck=(OUTER_CHANNELS[-1], h, w))
