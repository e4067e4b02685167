"""Encrypted extremum seeking between a key-holding client and a cloud evaluator.

Per iteration the cloud picks one of the 16 pre-encrypted perturbations, the
client runs the two perturbed step experiments and streams ``Enc(y(n))``, and
the cloud accumulates

    J_j += (w_n / N) * (1 - y(n) * (1/r_hat))^2        j in {+, -}

under encryption before returning ``Enc(dtheta_i) = (J_+ - J_-) * step_i`` with
``step_i = -alpha / (2 gamma h_i)``. Every ciphertext product is rescaled, so a
sample term sits three levels below fresh and the update four.

Multiplicative constants are encrypted at the scale of the prime that the
rescale following their product drops, which keeps every intermediate at the
nominal scale exactly: ``1/r_hat`` at ``q_L`` and the step factors at
``q_{L-3}``.
"""
import base64
import json
import socket
import struct
import threading
from dataclasses import dataclass

import numpy as np

from .hecore import Ciphertext, HeParams, make_scheme, preset
from .hecore.serialize import (ciphertext_from_bytes, ciphertext_to_bytes,
                               evaluation_key_from_bytes, evaluation_key_to_bytes)
from .pid import perturb, update, UpdateRejected
from .seeker import (ALL_MASKS, N_MASKS, N_PARAMS, IterationRecord, PlantObjective,
                     TuningTrace, cost, spawn_rngs, trapezoid_weights)

CIRCUIT_DEPTH = 4
RUNS = ("+", "-")


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CloudPrecomp:
    perturbations: tuple    # [mask][i] -> Enc(gamma * h_i)
    step_factors: tuple     # [mask][i] -> Enc(-alpha / (2 gamma h_i))
    inv_r: Ciphertext
    one: Ciphertext
    zero: Ciphertext

    def items(self):
        """``(kind, index, ciphertext)`` for every stored ciphertext."""
        for m, row in enumerate(self.perturbations):
            for i, ct in enumerate(row):
                yield "pre.d", m * N_PARAMS + i, ct
        for m, row in enumerate(self.step_factors):
            for i, ct in enumerate(row):
                yield "pre.step", m * N_PARAMS + i, ct
        yield "pre.inv_r", 0, self.inv_r
        yield "pre.one", 0, self.one
        yield "pre.zero", 0, self.zero

    @classmethod
    def from_items(cls, items):
        d = [[None] * N_PARAMS for _ in range(N_MASKS)]
        s = [[None] * N_PARAMS for _ in range(N_MASKS)]
        single = {}
        for kind, idx, ct in items:
            if kind == "pre.d":
                d[idx // N_PARAMS][idx % N_PARAMS] = ct
            elif kind == "pre.step":
                s[idx // N_PARAMS][idx % N_PARAMS] = ct
            else:
                single[kind] = ct
        return cls(tuple(map(tuple, d)), tuple(map(tuple, s)), single["pre.inv_r"],
                   single["pre.one"], single["pre.zero"])


def precompute(scheme, keys, cfg, rng):
    """Encrypt every table the cloud needs; done once by the key holder."""
    params = scheme.params
    top = params.levels
    step_scale = params.modulus_chain[max(top - 3, 0)]
    perturbations, steps = [], []
    for h in ALL_MASKS:
        d = cfg.gamma * h
        perturbations.append(tuple(scheme.enc(v, keys, rng) for v in d))
        steps.append(tuple(scheme.enc(-cfg.alpha / (2 * v), keys, rng, scale=step_scale)
                           for v in d))
    return CloudPrecomp(
        tuple(perturbations), tuple(steps),
        inv_r=scheme.enc(1.0 / cfg.r_hat, keys, rng, scale=params.modulus_chain[top]),
        one=scheme.enc(1.0, keys, rng),
        zero=scheme.enc(0.0, keys, rng),
    )


class CloudSession:
    """Cloud-side state machine. Holds ciphertexts and public scalars only."""

    def __init__(self, evaluator, precomp, n_samples, rng):
        if evaluator.params.levels < 3:
            raise ValueError("the sample term alone needs three levels")
        self.evaluator = evaluator
        self.precomp = precomp
        self.n_samples = int(n_samples)
        self.weights = trapezoid_weights(self.n_samples) / self.n_samples
        self.rng = rng
        self.top = evaluator.params.levels
        self.k = 0
        self.mask = None
        self.run = None
        self.n = 0
        self.acc = {}

    @property
    def accumulator_level(self):
        return self.top - 3

    def begin_iteration(self):
        if self.mask is not None:
            raise ProtocolError(f"iteration {self.k} still in progress")
        self.mask = int(self.rng.integers(N_MASKS))
        zero = self.evaluator.drop_level(self.precomp.zero, self.accumulator_level)
        self.acc = {"+": zero, "-": zero}
        self.run, self.n = "+", 0
        return list(self.precomp.perturbations[self.mask])

    def abort_iteration(self):
        """Discard a half-finished iteration; the next begin draws a fresh mask."""
        self.mask, self.run, self.n, self.acc = None, None, 0, {}

    def sample_term(self, ct_y, n):
        """``Enc((w_n/N) * (1 - y/r_hat)^2)``, three levels below ``ct_y``."""
        ev = self.evaluator
        ratio = ev.mult(ct_y, self.precomp.inv_r)
        err = ev.sub(ev.drop_level(self.precomp.one, ratio.level), ratio)
        return ev.mult_plain(ev.mult(err, err), float(self.weights[n]))

    def ingest_sample(self, ct_y, n, run=None):
        if self.mask is None or self.run not in RUNS:
            raise ProtocolError("no experiment is expecting samples")
        if run is not None and run != self.run:
            raise ProtocolError(f"sample for run {run!r} while run {self.run!r} is active")
        if n != self.n:
            raise ProtocolError(f"expected sample {self.n}, got {n}")
        if ct_y.level != self.top:
            raise ProtocolError(f"sample ciphertext at level {ct_y.level}, expected fresh {self.top}")
        self.acc[self.run] = self.evaluator.add(self.acc[self.run], self.sample_term(ct_y, n))
        self.n += 1
        if self.n == self.n_samples:
            self.run, self.n = ("-", 0) if self.run == "+" else ("done", 0)

    def finish_iteration(self):
        if self.run != "done":
            raise ProtocolError("both experiments must complete before the update")
        ev = self.evaluator
        diff = ev.sub(self.acc["+"], self.acc["-"])
        out = [ev.mult(diff, ev.drop_level(step, diff.level))
               for step in self.precomp.step_factors[self.mask]]
        self.mask, self.run, self.acc = None, None, {}
        self.k += 1
        return out


# ---------------------------------------------------------------------------
# frames and transports

def make_frame(direction, k, j, n, kind, ct=None):
    return {"dir": direction, "k": k, "j": j, "n": n, "kind": kind, "ct": ct}


class FrameCodec:
    def __init__(self, params):
        self.params = params

    def dumps(self, frame):
        out = {key: frame[key] for key in ("dir", "k", "j", "n", "kind")}
        ct = frame.get("ct")
        out["ciphertext"] = (None if ct is None else
                             base64.b64encode(ciphertext_to_bytes(ct, self.params)).decode("ascii"))
        return json.dumps(out, separators=(",", ":"))

    def loads(self, line):
        raw = json.loads(line)
        data = raw.pop("ciphertext", None)
        raw["ct"] = None if data is None else ciphertext_from_bytes(base64.b64decode(data), self.params)
        return raw


class Transcript:
    """JSON-lines record of a session: one header line, then every frame."""

    def __init__(self, path, params, backend, evk, meta=None):
        self.codec = FrameCodec(params)
        self.fh = open(path, "w")
        header = {"kind": "session", "backend": backend, "params": params.to_dict(),
                  "evk": base64.b64encode(evaluation_key_to_bytes(evk)).decode("ascii"),
                  **(meta or {})}
        self.fh.write(json.dumps(header) + "\n")

    def record(self, frame):
        self.fh.write(self.codec.dumps(frame) + "\n")

    def close(self):
        self.fh.close()


class CloudServer:
    """Dispatches client frames onto a :class:`CloudSession`."""

    def __init__(self, session):
        self.session = session

    def handle(self, frame):
        s = self.session
        kind = frame["kind"]
        if kind == "begin":
            k = s.k
            return [make_frame("s2c", k, None, i, "d", ct) for i, ct in enumerate(s.begin_iteration())]
        if kind == "y":
            s.ingest_sample(frame["ct"], frame["n"], frame["j"])
            return []
        if kind == "finish":
            k = s.k
            return [make_frame("s2c", k, None, i, "dtheta", ct)
                    for i, ct in enumerate(s.finish_iteration())]
        raise ProtocolError(f"unknown frame kind {kind!r}")


class InProcessChannel:
    def __init__(self, server, transcript=None):
        self.server = server
        self.transcript = transcript

    def request(self, frame):
        if self.transcript:
            self.transcript.record(frame)
        replies = self.server.handle(frame)
        if self.transcript:
            for r in replies:
                self.transcript.record(r)
        return replies

    def close(self):
        pass


def _send(sock, payload):
    sock.sendall(struct.pack(">I", len(payload)) + payload)


def _recv(sock):
    head = _recv_exact(sock, 4)
    if head is None:
        return None
    (length,) = struct.unpack(">I", head)
    return _recv_exact(sock, length)


def _recv_exact(sock, count):
    buf = bytearray()
    while len(buf) < count:
        chunk = sock.recv(count - len(buf))
        if not chunk:
            return None
        buf.extend(chunk)
    return bytes(buf)


class TcpChannel:
    """Loopback TCP transport: length-prefixed JSON frames, one reply batch per request."""

    def __init__(self, server, params, transcript=None):
        self.codec = FrameCodec(params)
        self.transcript = transcript
        self.listener = socket.create_server(("127.0.0.1", 0))
        self.port = self.listener.getsockname()[1]
        self.error = None
        self.thread = threading.Thread(target=self._serve, args=(server,), daemon=True)
        self.thread.start()
        self.sock = socket.create_connection(("127.0.0.1", self.port))

    def _serve(self, server):
        conn, _ = self.listener.accept()
        with conn:
            while True:
                data = _recv(conn)
                if data is None:
                    return
                try:
                    replies = server.handle(self.codec.loads(data.decode()))
                    body = [self.codec.dumps(r) for r in replies]
                    _send(conn, json.dumps({"ok": True, "frames": body}).encode())
                except Exception as exc:  # reported back to the client
                    _send(conn, json.dumps({"ok": False, "error": f"{type(exc).__name__}: {exc}"}).encode())

    def request(self, frame):
        line = self.codec.dumps(frame)
        if self.transcript:
            self.transcript.fh.write(line + "\n")
        _send(self.sock, line.encode())
        reply = json.loads(_recv(self.sock).decode())
        if not reply["ok"]:
            raise ProtocolError(f"cloud error: {reply['error']}")
        if self.transcript:
            for line in reply["frames"]:
                self.transcript.fh.write(line + "\n")
        return [self.codec.loads(line) for line in reply["frames"]]

    def close(self):
        self.sock.close()
        self.thread.join(timeout=5)
        self.listener.close()


# ---------------------------------------------------------------------------
# client role

class TuningClient:
    """Owns the secret key and the plant; never shares plaintext with the cloud."""

    def __init__(self, scheme, keys, objective, rng):
        self.scheme = scheme
        self.keys = keys
        self.objective = objective
        self.rng = rng

    def decrypt_vector(self, frames):
        return np.array([self.scheme.dec(f["ct"], self.keys) for f in sorted(frames, key=lambda f: f["n"])])

    def encrypt(self, value):
        return self.scheme.enc(float(value), self.keys, self.rng)


def run_encrypted_tuning(plant, theta0, cfg, backend="reference", params=None,
                         transcript_path=None, transport="inprocess", objective=None,
                         keys=None):
    """Run the full client/cloud protocol for ``cfg.k_max`` iterations.

    Randomness is split exactly as in :func:`hetune.seeker.run_tuning`, so the
    cloud draws the same mask sequence as a plaintext run with the same seed.
    """
    mask_rng, noise_rng, enc_rng = spawn_rngs(cfg.seed)
    params = params or preset("fast")
    if not isinstance(params, HeParams):
        params = preset(params)
    scheme = make_scheme(backend, params)
    keys = keys or scheme.keygen(enc_rng)
    precomp = precompute(scheme, keys, cfg, enc_rng)
    session = CloudSession(scheme.evaluator(keys.public()), precomp, cfg.N, mask_rng)
    server = CloudServer(session)

    transcript = None
    if transcript_path is not None:
        transcript = Transcript(transcript_path, params, backend, keys.public(),
                                {"N": cfg.N, "k_max": cfg.k_max})
        for kind, idx, ct in precomp.items():
            transcript.record(make_frame("c2s", -1, None, idx, kind, ct))
    if transport == "tcp":
        channel = TcpChannel(server, params, transcript)
    elif transport == "inprocess":
        channel = InProcessChannel(server, transcript)
    else:
        raise ValueError(f"unknown transport {transport!r}")

    if objective is None:
        objective = PlantObjective(plant, cfg, noise_rng)
    client = TuningClient(scheme, keys, objective, enc_rng)
    trace = TuningTrace(theta0)
    theta = theta0
    try:
        for k in range(cfg.k_max):
            d_frames = channel.request(make_frame("c2s", k, None, 0, "begin"))
            d = client.decrypt_vector(d_frames)
            h = np.sign(d)
            mask_index = sum(1 << i for i in range(N_PARAMS) if h[i] > 0)
            costs = {}
            for j, th in zip(RUNS, perturb(theta, d)):
                y = objective.response(th)
                costs[j] = cost(y, cfg.r_hat, objective.weights, cfg.N)
                for n, value in enumerate(y):
                    channel.request(make_frame("c2s", k, j, n, "y", client.encrypt(value)))
            delta = client.decrypt_vector(channel.request(make_frame("c2s", k, None, 0, "finish")))
            record = IterationRecord(k, mask_index, h, theta, costs["+"], costs["-"], delta)
            try:
                theta = update(theta, delta)
            except UpdateRejected as exc:
                trace.halted = f"iteration {k}: {exc}"
                break
            trace.records.append(record)
    finally:
        channel.close()
        if transcript:
            transcript.close()
    trace.final_theta = theta
    return trace


# ---------------------------------------------------------------------------
# offline replay

@dataclass
class ReplayReport:
    iterations: int
    samples: int
    updates_checked: int
    mismatches: list

    @property
    def identical(self):
        return not self.mismatches


def replay_transcript(path):
    """Re-run the cloud side from a transcript and compare every update byte-for-byte."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("kind") != "session":
            raise ValueError(f"{path} does not start with a session header")
        params = HeParams.from_dict(header["params"])
        backend = header["backend"]
        codec = FrameCodec(params)
        evk = evaluation_key_from_bytes(base64.b64decode(header["evk"]), backend, params)
        frames = [codec.loads(line) for line in fh if line.strip()]

    pre_items = [(f["kind"], f["n"], f["ct"]) for f in frames if f["kind"].startswith("pre.")]
    precomp = CloudPrecomp.from_items(pre_items)
    evaluator = make_scheme(backend, params).evaluator(evk)
    d_bytes = [b"".join(ciphertext_to_bytes(ct, params) for ct in row) for row in precomp.perturbations]

    class _Replayed:
        """Mask source that re-selects whatever the transcript shows."""

        def __init__(self):
            self.queue = []

        def integers(self, high):
            return self.queue.pop(0)

    chooser = _Replayed()
    session = CloudSession(evaluator, precomp, header["N"], chooser)
    mismatches, samples, checked, iterations = [], 0, 0, 0
    pending_d, expected = [], {}
    for f in frames:
        kind = f["kind"]
        if kind == "d":
            pending_d.append(f)
            if len(pending_d) == N_PARAMS:
                blob = b"".join(ciphertext_to_bytes(x["ct"], params)
                                for x in sorted(pending_d, key=lambda x: x["n"]))
                if blob not in d_bytes:
                    raise ValueError(f"iteration {f['k']}: perturbation not in the precomputed table")
                chooser.queue.append(d_bytes.index(blob))
                session.begin_iteration()
                pending_d = []
        elif kind == "y":
            session.ingest_sample(f["ct"], f["n"], f["j"])
            samples += 1
        elif kind == "dtheta":
            expected[f["n"]] = f
            if len(expected) == N_PARAMS:
                recomputed = session.finish_iteration()
                for i, ct in enumerate(recomputed):
                    checked += 1
                    if ciphertext_to_bytes(ct, params) != ciphertext_to_bytes(expected[i]["ct"], params):
                        mismatches.append((f["k"], i))
                expected = {}
                iterations += 1
    return ReplayReport(iterations, samples, checked, mismatches)
