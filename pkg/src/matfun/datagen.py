"""Dataset generation: clipped-Gaussian matrices, oracle targets, domain
rejection, and reproducible JSON-lines persistence.

All randomness flows through numpy's counter-based Philox (4x64-10)
generator. Sample i of a dataset draws from Philox(key=[master_seed,
salt(function, n)]).jumped(i), so generation order, worker layout, and
platform do not affect the bytes produced.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DatasetError, RejectionCapError
from .oracles import FUNCTION_TAGS, SPECTRAL_MARGIN, eigenvalues, oracle

PRNG_NAME = "numpy Philox4x64-10, per-sample jumped streams"

_FUNCTION_SALT = {tag: i + 1 for i, tag in enumerate(FUNCTION_TAGS)}

REJECTION_CAP = 1000


@dataclass
class Sample:
    input: np.ndarray
    target: np.ndarray
    function: str
    seed_index: int


@dataclass
class DatasetManifest:
    function: str
    n: int
    count: int
    master_seed: int
    sigma: float
    clip: float
    margin: float
    rejections: dict = field(default_factory=dict)
    prng: str = PRNG_NAME
    format: str = "matfun-dataset-v1"

    def to_dict(self) -> dict:
        return {
            "format": self.format,
            "function": self.function,
            "n": self.n,
            "count": self.count,
            "master_seed": self.master_seed,
            "sigma": self.sigma,
            "clip": self.clip,
            "margin": self.margin,
            "rejections": self.rejections,
            "prng": self.prng,
        }


def sample_rng(master_seed: int, function: str, n: int, seed_index: int):
    salt = _FUNCTION_SALT.get(function, 0) * 64 + n
    bitgen = np.random.Philox(key=np.array([master_seed, salt], dtype=np.uint64))
    return np.random.Generator(bitgen.jumped(seed_index))


def sample_matrix(n: int, rng, sigma: float = 1.0, clip: float = 5.0) -> np.ndarray:
    """i.i.d. normal entries scaled by sigma, clipped entrywise to [-clip, clip]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a = sigma * rng.standard_normal((n, n))
    np.clip(a, -clip, clip, out=a)
    return a


def domain_ok(function: str, a: np.ndarray, margin: float = SPECTRAL_MARGIN) -> bool:
    """exp/sin/cos accept everything; log and sign gate on the spectrum."""
    if function in ("exp", "sin", "cos"):
        return True
    spec = eigenvalues(a)
    if function == "log":
        return spec.log_domain_ok(margin)
    if function == "sign":
        return spec.sign_domain_ok(margin)
    raise KeyError(f"unknown function tag {function!r}")


def target_for(function: str, a: np.ndarray) -> np.ndarray:
    return oracle(function)(a)


def make_sample(
    n: int,
    function: str,
    rng,
    seed_index: int = 0,
    sigma: float = 1.0,
    clip: float = 5.0,
    margin: float = SPECTRAL_MARGIN,
    rejection_counts: dict | None = None,
) -> Sample:
    """Draw until the domain condition holds, then attach the oracle target.

    Raises RejectionCapError after REJECTION_CAP draws; that signals
    mis-set margins rather than bad luck.
    """
    if function not in FUNCTION_TAGS:
        raise KeyError(f"unknown function tag {function!r}")
    counts = rejection_counts if rejection_counts is not None else {}
    for _ in range(REJECTION_CAP):
        a = sample_matrix(n, rng, sigma=sigma, clip=clip)
        if not domain_ok(function, a, margin):
            counts["domain"] = counts.get("domain", 0) + 1
            continue
        try:
            target = target_for(function, a)
        except ConvergenceError:
            counts["oracle"] = counts.get("oracle", 0) + 1
            continue
        return Sample(input=a, target=target, function=function, seed_index=seed_index)
    raise RejectionCapError(
        f"{function} n={n}: {REJECTION_CAP} consecutive draws rejected"
    )


def generate(
    function: str,
    n: int,
    count: int,
    master_seed: int,
    sigma: float = 1.0,
    clip: float = 5.0,
    margin: float = SPECTRAL_MARGIN,
):
    """Yield (manifest, samples). Deterministic in all arguments."""
    rejections: dict = {}
    samples = []
    for i in range(count):
        rng = sample_rng(master_seed, function, n, i)
        samples.append(
            make_sample(
                n,
                function,
                rng,
                seed_index=i,
                sigma=sigma,
                clip=clip,
                margin=margin,
                rejection_counts=rejections,
            )
        )
    manifest = DatasetManifest(
        function=function,
        n=n,
        count=count,
        master_seed=master_seed,
        sigma=sigma,
        clip=clip,
        margin=margin,
        rejections=rejections,
    )
    return manifest, samples


def write_dataset(path, manifest: DatasetManifest, samples) -> None:
    """Manifest header line, then one JSON record per sample with full
    float64 precision (shortest round-trip reprs)."""
    if manifest.count != len(samples):
        raise DatasetError(
            f"manifest count {manifest.count} != {len(samples)} samples"
        )
    with open(path, "w") as fh:
        fh.write(json.dumps({"__manifest__": manifest.to_dict()}, sort_keys=True) + "\n")
        for s in samples:
            fh.write(
                json.dumps(
                    {
                        "seed_index": s.seed_index,
                        "input": s.input.tolist(),
                        "target": s.target.tolist(),
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_dataset(path):
    """Read back (manifest, samples); floats reproduce bit-exactly."""
    with open(path) as fh:
        first = fh.readline()
        try:
            head = json.loads(first)["__manifest__"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise DatasetError(f"{path}: missing manifest header") from exc
        manifest = DatasetManifest(
            function=head["function"],
            n=head["n"],
            count=head["count"],
            master_seed=head["master_seed"],
            sigma=head["sigma"],
            clip=head["clip"],
            margin=head["margin"],
            rejections=head.get("rejections", {}),
            prng=head.get("prng", PRNG_NAME),
        )
        samples = []
        for line in fh:
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                samples.append(
                    Sample(
                        input=np.array(rec["input"], dtype=np.float64),
                        target=np.array(rec["target"], dtype=np.float64),
                        function=manifest.function,
                        seed_index=rec["seed_index"],
                    )
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise DatasetError(f"{path}: corrupt record") from exc
    if len(samples) != manifest.count:
        raise DatasetError(
            f"{path}: manifest says {manifest.count} samples, found {len(samples)}"
        )
    return manifest, samples


def generate_to_file(path, function, n, count, master_seed, sigma=1.0, clip=5.0):
    manifest, samples = generate(function, n, count, master_seed, sigma, clip)
    write_dataset(path, manifest, samples)
    return manifest
