"""Autoregressive dual-stream GRU over POVM outcome strings.

The sampler factorizes the joint outcome distribution site by site,
p(i_1..i_L) = prod_j p(i_j | i_<j), with conditionals produced by two
stacked-GRU streams read out through a gated fusion:

* a uniform stream consuming the one-hot of the previous outcome, and
* a parity stream consuming the same one-hot plus a staggered channel
  (-1)^j, giving period-2 structure a direct route into the conditionals
  (antiferromagnetic correlations otherwise cost the recurrence a full
  hidden-state oscillation).

Fusion:  g = sigmoid(W_g h_uni + b_g),  h = h_uni + g * h_par, followed
by a linear head to 4 logits.  Site 0 consumes a zero one-hot.

Gradients are computed by hand (reverse accumulation through the
recurrence).  Two sampling modes:

* ``sample_inference``: ancestral sampling, no tape, used for the large
  measurement buffers.
* ``sample_gumbel_st``: straight-through Gumbel-softmax.  Perturbed
  logits pick a hard outcome by argmax; a tempered softmax of the same
  perturbed logits is the relaxed weight vector y carried by estimators.
  The hard one-hots fed back into the recurrence are locally constant in
  the parameters at fixed noise, so the backward pass routes gradients
  only through y; within that graph the gradients are exact, which is
  what the finite-difference checks in the test suite verify.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.special import expit as _sigmoid

_GATES = ("z", "r", "h")


def _softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def gumbel_noise(u: np.ndarray) -> np.ndarray:
    """g = -log(-log u) for uniform u in (0, 1)."""
    return -np.log(-np.log(np.clip(u, 1e-300, None)))


class SampleTape:
    """Per-site intermediate values recorded by a gradient-mode forward."""

    def __init__(self, temperature: float):
        self.temperature = temperature
        self.x0 = {}        # stream -> list of (N, D_in) layer-0 inputs
        self.h_prev = {}    # (stream, layer) -> list of (N, H)
        self.h_new = {}     # (stream, layer) -> list of (N, H)
        self.z = {}
        self.r = {}
        self.c = {}
        self.gate = []      # list of (N, H) fusion gates
        self.h_out = []     # list of (N, H)
        self.y = None       # (N, L, 4) relaxed weights


class DualStreamModel:
    """GRU sampler with parameters in a flat name -> ndarray dict."""

    def __init__(self, size: int, hidden: int = 64, layers: int = 2,
                 dual_stream: bool = True, seed: int = 0):
        if size < 1 or hidden < 1 or layers < 1:
            raise ValueError("size, hidden and layers must be positive")
        self.size = size
        self.hidden = hidden
        self.layers = layers
        self.dual_stream = bool(dual_stream)
        self.streams = ("uni", "par") if dual_stream else ("uni",)
        self.params: dict[str, np.ndarray] = {}
        shapes = self._param_shapes()
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(hidden)
        for name in sorted(shapes):
            shape = shapes[name]
            last = name.rsplit(".", 1)[1]
            if last.startswith(("W", "U")):
                self.params[name] = rng.uniform(-scale, scale, size=shape)
            else:
                self.params[name] = np.zeros(shape)
        self.param_names = sorted(self.params)

    # -- parameter bookkeeping ------------------------------------------

    def _input_dim(self, stream: str, layer: int) -> int:
        if layer > 0:
            return self.hidden
        return 5 if stream == "par" else 4

    def _param_shapes(self) -> dict[str, tuple]:
        h = self.hidden
        shapes: dict[str, tuple] = {}
        for st in self.streams:
            for l in range(self.layers):
                d = self._input_dim(st, l)
                for gname in _GATES:
                    shapes[f"{st}{l}.W{gname}"] = (d, h)
                    shapes[f"{st}{l}.U{gname}"] = (h, h)
                    shapes[f"{st}{l}.b{gname}"] = (h,)
                shapes[f"{st}{l}.h0"] = (h,)
        if self.dual_stream:
            shapes["gate.W"] = (h, h)
            shapes["gate.b"] = (h,)
        shapes["head.W"] = (h, 4)
        shapes["head.b"] = (4,)
        return shapes

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.params[n].reshape(-1) for n in self.param_names])

    def set_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for n in self.param_names:
            p = self.params[n]
            p[...] = flat[pos : pos + p.size].reshape(p.shape)
            pos += p.size
        if pos != flat.size:
            raise ValueError("flat vector length does not match parameter count")

    def flatten_grads(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([grads[n].reshape(-1) for n in self.param_names])

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {n: np.zeros_like(p) for n, p in self.params.items()}

    # -- forward pieces --------------------------------------------------

    def _cell_forward(self, st: str, l: int, x, h):
        # z/r/candidate input-side matmuls fused into one wide product;
        # only the candidate's recurrent term needs the post-reset state
        p = self.params
        key = f"{st}{l}."
        hd = self.hidden
        ax = x @ np.hstack([p[key + "Wz"], p[key + "Wr"], p[key + "Wh"]])
        ah = h @ np.hstack([p[key + "Uz"], p[key + "Ur"]])
        z = _sigmoid(ax[:, :hd] + ah[:, :hd] + p[key + "bz"])
        r = _sigmoid(ax[:, hd:2 * hd] + ah[:, hd:] + p[key + "br"])
        c = np.tanh(ax[:, 2 * hd:] + (r * h) @ p[key + "Uh"] + p[key + "bh"])
        return (1.0 - z) * h + z * c, z, r, c

    def _init_hidden(self, st: str, l: int, n: int):
        return np.broadcast_to(self.params[f"{st}{l}.h0"], (n, self.hidden)).copy()

    def _site_logits(self, x_onehot, hidden, j: int, parity_offset: int, tape=None):
        """Advance every stream one site and return logits; mutates hidden."""
        n = x_onehot.shape[0]
        tops = {}
        for st in self.streams:
            if st == "par":
                par = np.full((n, 1), (-1.0) ** ((j + parity_offset) % 2))
                cur = np.concatenate([x_onehot, par], axis=1)
            else:
                cur = x_onehot
            if tape is not None:
                tape.x0[st].append(cur)
            for l in range(self.layers):
                h = hidden[(st, l)]
                h_new, z, r, c = self._cell_forward(st, l, cur, h)
                if tape is not None:
                    tape.h_prev[(st, l)].append(h)
                    tape.h_new[(st, l)].append(h_new)
                    tape.z[(st, l)].append(z)
                    tape.r[(st, l)].append(r)
                    tape.c[(st, l)].append(c)
                hidden[(st, l)] = h_new
                cur = h_new
            tops[st] = cur
        if self.dual_stream:
            g = _sigmoid(tops["uni"] @ self.params["gate.W"] + self.params["gate.b"])
            h_out = tops["uni"] + g * tops["par"]
        else:
            g = None
            h_out = tops["uni"]
        if tape is not None:
            tape.gate.append(g)
            tape.h_out.append(h_out)
        return h_out @ self.params["head.W"] + self.params["head.b"]

    def _fresh_state(self, n: int, tape=None):
        hidden = {(st, l): self._init_hidden(st, l, n)
                  for st in self.streams for l in range(self.layers)}
        if tape is not None:
            for st in self.streams:
                tape.x0[st] = []
                for l in range(self.layers):
                    for store in (tape.h_prev, tape.h_new, tape.z, tape.r, tape.c):
                        store[(st, l)] = []
        return hidden

    # -- public forward modes ---------------------------------------------

    def conditional_logits(self, outcomes: np.ndarray, parity_offset: int = 0) -> np.ndarray:
        """Teacher-forced logits at every site, shape (N, L, 4)."""
        outcomes = np.asarray(outcomes)
        n = outcomes.shape[0]
        hidden = self._fresh_state(n)
        x = np.zeros((n, 4))
        out = np.empty((n, self.size, 4))
        for j in range(self.size):
            out[:, j] = self._site_logits(x, hidden, j, parity_offset)
            x = np.zeros((n, 4))
            x[np.arange(n), outcomes[:, j]] = 1.0
        return out

    def forward_logits(self, prefix) -> np.ndarray:
        """Conditional logits for the site following ``prefix`` (length j)."""
        prefix = np.asarray(prefix, dtype=np.int64).reshape(-1)
        j = prefix.shape[0]
        if j >= self.size:
            raise ValueError("prefix already covers the whole ring")
        hidden = self._fresh_state(1)
        x = np.zeros((1, 4))
        for site in range(j + 1):
            logits = self._site_logits(x, hidden, site, 0)
            if site < j:
                x = np.zeros((1, 4))
                x[0, prefix[site]] = 1.0
        return logits[0]

    def sample_inference(self, n: int, rng: np.random.Generator):
        """Ancestral sampling without gradient bookkeeping.

        Returns (outcomes (n, L) int8, log-probabilities (n,)).
        """
        hidden = self._fresh_state(n)
        x = np.zeros((n, 4))
        out = np.empty((n, self.size), dtype=np.int8)
        logp = np.zeros(n)
        rows = np.arange(n)
        for j in range(self.size):
            probs = _softmax(self._site_logits(x, hidden, j, 0))
            u = rng.random(n)
            choice = np.minimum((u[:, None] > np.cumsum(probs, axis=1)).sum(axis=1), 3)
            out[:, j] = choice
            logp += np.log(probs[rows, choice])
            x = np.zeros((n, 4))
            x[rows, choice] = 1.0
        return out, logp

    def sample_gumbel_st(self, n: int, temperature: float, rng: np.random.Generator,
                         noise: np.ndarray | None = None):
        """Straight-through Gumbel-softmax sampling with a gradient tape.

        Returns (outcomes (n, L) int8, tape).  ``tape.y`` holds the
        relaxed weights actually consumed by downstream estimators; pass
        their adjoint to :meth:`backward` to get parameter gradients.
        ``noise`` overrides the Gumbel draws (for derivative checks).
        """
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        if noise is None:
            noise = gumbel_noise(rng.random((n, self.size, 4)))
        tape = SampleTape(temperature)
        hidden = self._fresh_state(n, tape)
        x = np.zeros((n, 4))
        out = np.empty((n, self.size), dtype=np.int8)
        y = np.empty((n, self.size, 4))
        rows = np.arange(n)
        for j in range(self.size):
            logits = self._site_logits(x, hidden, j, 0, tape)
            perturbed = logits + noise[:, j]
            choice = np.argmax(perturbed, axis=1)
            out[:, j] = choice
            y[:, j] = _softmax(perturbed / temperature)
            x = np.zeros((n, 4))
            x[rows, choice] = 1.0
        tape.y = y
        return out, tape

    # -- backward ---------------------------------------------------------

    def _cell_backward(self, st, l, dh, x, h_prev, z, r, c, grads):
        p = self.params
        dz = dh * (c - h_prev)
        da_z = dz * z * (1.0 - z)
        dc = dh * z
        da_c = dc * (1.0 - c * c)
        t = da_c @ p[f"{st}{l}.Uh"].T
        dr = t * h_prev
        da_r = dr * r * (1.0 - r)
        dh_prev = dh * (1.0 - z) + da_z @ p[f"{st}{l}.Uz"].T + da_r @ p[f"{st}{l}.Ur"].T + t * r
        dx = da_z @ p[f"{st}{l}.Wz"].T + da_r @ p[f"{st}{l}.Wr"].T + da_c @ p[f"{st}{l}.Wh"].T
        grads[f"{st}{l}.Wz"] += x.T @ da_z
        grads[f"{st}{l}.Uz"] += h_prev.T @ da_z
        grads[f"{st}{l}.bz"] += da_z.sum(axis=0)
        grads[f"{st}{l}.Wr"] += x.T @ da_r
        grads[f"{st}{l}.Ur"] += h_prev.T @ da_r
        grads[f"{st}{l}.br"] += da_r.sum(axis=0)
        grads[f"{st}{l}.Wh"] += x.T @ da_c
        grads[f"{st}{l}.Uh"] += (r * h_prev).T @ da_c
        grads[f"{st}{l}.bh"] += da_c.sum(axis=0)
        return dx, dh_prev

    def backward(self, tape: SampleTape, d_y: np.ndarray) -> dict[str, np.ndarray]:
        """Reverse pass from adjoints of the relaxed weights.

        ``d_y`` has shape (N, L, 4) = d loss / d tape.y.  Returns a dict
        of parameter gradients.  May be called repeatedly on one tape
        with different adjoints (energy and constraint losses share the
        forward pass).
        """
        p = self.params
        grads = self.zero_grads()
        carry = {(st, l): 0.0 for st in self.streams for l in range(self.layers)}
        temp = tape.temperature
        y = tape.y
        for j in range(self.size - 1, -1, -1):
            yj = y[:, j]
            dyj = d_y[:, j]
            dlogits = yj * (dyj - (dyj * yj).sum(axis=1, keepdims=True)) / temp
            grads["head.W"] += tape.h_out[j].T @ dlogits
            grads["head.b"] += dlogits.sum(axis=0)
            dh_out = dlogits @ p["head.W"].T
            top = self.layers - 1
            if self.dual_stream:
                g = tape.gate[j]
                da_g = dh_out * tape.h_new[("par", top)][j] * g * (1.0 - g)
                grads["gate.W"] += tape.h_new[("uni", top)][j].T @ da_g
                grads["gate.b"] += da_g.sum(axis=0)
                dtop = {"uni": dh_out + da_g @ p["gate.W"].T,
                        "par": dh_out * g}
            else:
                dtop = {"uni": dh_out}
            for st in self.streams:
                dcur = dtop[st]
                for l in range(self.layers - 1, -1, -1):
                    dh = dcur + carry[(st, l)]
                    x = tape.x0[st][j] if l == 0 else tape.h_new[(st, l - 1)][j]
                    dx, dh_prev = self._cell_backward(
                        st, l, dh,
                        x,
                        tape.h_prev[(st, l)][j],
                        tape.z[(st, l)][j],
                        tape.r[(st, l)][j],
                        tape.c[(st, l)][j],
                        grads,
                    )
                    carry[(st, l)] = dh_prev
                    dcur = dx
                # dcur now holds the adjoint of the layer-0 input
                # (hard one-hots and the parity channel): locally constant,
                # dropped by the straight-through convention
        for st in self.streams:
            for l in range(self.layers):
                grads[f"{st}{l}.h0"] += np.asarray(carry[(st, l)]).sum(axis=0)
        return grads

    # -- serialization ------------------------------------------------------

    def metadata(self) -> dict:
        return {"size": self.size, "hidden": self.hidden, "layers": self.layers,
                "dual_stream": self.dual_stream}

    def save(self, path, extra: dict | None = None) -> None:
        """Write a versioned checkpoint: little-endian float64 parameter
        arrays plus a JSON metadata record."""
        meta = {"format_version": 1, "model": self.metadata()}
        if extra:
            meta["extra"] = extra
        arrays = {n: self.params[n].astype("<f8") for n in self.param_names}
        arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path):
        """Recreate a model from :meth:`save`; returns (model, metadata)."""
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"][()]))
            if meta.get("format_version") != 1:
                raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
            m = meta["model"]
            model = cls(m["size"], m["hidden"], m["layers"], m["dual_stream"], seed=0)
            for n in model.param_names:
                if n not in data:
                    raise ValueError(f"checkpoint missing parameter {n}")
                arr = data[n]
                if arr.shape != model.params[n].shape:
                    raise ValueError(f"checkpoint parameter {n} has shape {arr.shape}")
                model.params[n] = arr.astype(np.float64)
        return model, meta
