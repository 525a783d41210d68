"""End-to-end metric orchestration.

Feature sets are flattened, compressed by PCA, modeled with a zero-mean
generalized Gaussian each, and compared with the closed-form KL
divergence (the feature distribution distance, FDD). The index is the
log-shifted divergence

    srga = log10(fdd + 10^-delta) + delta        (delta defaults to 5)

so a perfect match scores exactly 0. The mean index over several test
sets (reference excluded) summarizes a model.

Projection fitting policy: by default ("ref" mode) the projection basis
and mean are fit on the reference dataset and applied unchanged to test
datasets so both coefficient sets share one basis. "joint" fits the
basis on the union, "per-dataset" fits each dataset separately.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ValidationError
from .featstore import FeatureSet, flatten
from .stats import GgdParams, PcaCompressor, fit_ggd, ggd_kld
from .validation import check_image

PCA_MODES = ("ref", "joint", "per-dataset")
DEFAULT_DELTA = 5.0
DEFAULT_COMPONENTS = 300
PSNR_CAP_DB = 100.0

# fixed float formatting rule for reproducible report/CSV artifacts
_FLOAT_FMT = ".17g"


def format_float(value: float) -> str:
    return format(float(value), _FLOAT_FMT)


def srga_index(fdd: float, delta: float = DEFAULT_DELTA) -> float:
    """Log-shifted divergence; strictly increasing, 0 at fdd = 0."""
    if not math.isfinite(fdd) or fdd < 0:
        raise ValidationError(f"fdd must be finite and >= 0, got {fdd}")
    return math.log10(fdd + 10.0 ** (-delta)) + delta


def msrga(indices) -> float:
    """Arithmetic mean of per-dataset index values (reference excluded
    upstream)."""
    values = list(indices)
    if not values:
        raise ValidationError("msrga needs at least one index value")
    return float(np.mean(values))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB over all channels of two 8-bit
    images; identical inputs report the 100 dB cap."""
    a = check_image(a, "first image")
    b = check_image(b, "second image")
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return 10.0 * math.log10(255.0 ** 2 / mse)


@dataclass(frozen=True)
class SrgaEntry:
    test_id: str
    fdd: float
    srga: float
    ggd_ref: GgdParams
    ggd_test: GgdParams

    def to_dict(self) -> dict:
        return {
            "test_id": self.test_id,
            "fdd": self.fdd,
            "srga": self.srga,
            "ggd_ref": self.ggd_ref.to_dict(),
            "ggd_test": self.ggd_test.to_dict(),
        }


@dataclass
class SrgaReport:
    model_id: str
    reference_id: str
    delta: float
    entries: list[SrgaEntry]
    msrga: float
    n_components: int = DEFAULT_COMPONENTS
    pca_mode: str = "ref"

    def __post_init__(self):
        ids = [e.test_id for e in self.entries]
        if self.reference_id in ids:
            raise ValidationError(
                f"reference dataset {self.reference_id!r} must not appear "
                "among the test entries")
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate test dataset ids in report")

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "reference_id": self.reference_id,
            "delta": self.delta,
            "n_components": self.n_components,
            "pca_mode": self.pca_mode,
            "entries": [e.to_dict() for e in self.entries],
            "msrga": self.msrga,
        }

    def to_json(self) -> str:
        """Deterministic JSON with the fixed float formatting rule."""
        return _dump_json(self.to_dict()) + "\n"


def _dump_json(obj, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(
            f'{pad}  "{key}": {_dump_json(value, indent + 1)}'
            for key, value in obj.items())
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = ",\n".join(
            f"{pad}  {_dump_json(value, indent + 1)}" for value in obj)
        return "[\n" + items + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if obj is None:
        return "null"
    return '"' + str(obj).replace("\\", "\\\\").replace('"', '\\"') + '"'


def write_csv(rows, header) -> str:
    """Render plot-ready CSV with the fixed float formatting rule."""
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        cells = [format_float(v) if isinstance(v, float) else str(v)
                 for v in row]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def _check_compatible(ref: FeatureSet, test: FeatureSet) -> None:
    if ref.tensor_shape != test.tensor_shape:
        raise ValidationError(
            f"feature shapes differ: reference {ref.tensor_shape} vs test "
            f"{test.tensor_shape}")


def compute_fdd(ref: FeatureSet, test: FeatureSet,
                n_components: int = DEFAULT_COMPONENTS,
                pca_mode: str = "ref"
                ) -> tuple[float, GgdParams, GgdParams]:
    """Feature distribution distance between a reference and a test set.

    Returns (fdd, fitted reference params, fitted test params).
    """
    if pca_mode not in PCA_MODES:
        raise ValidationError(
            f"pca_mode must be one of {PCA_MODES}, got {pca_mode!r}")
    _check_compatible(ref, test)
    y_ref = flatten(ref)
    y_test = flatten(test)
    if pca_mode in ("ref", "per-dataset"):
        for name, y in (("reference", y_ref), ("test", y_test)):
            if y.shape[0] < n_components + 1:
                raise ValidationError(
                    f"{name} set has N={y.shape[0]} tensors; need "
                    f"N >= D+1 = {n_components + 1} under {pca_mode!r} mode")
    if pca_mode == "ref":
        pca = PcaCompressor(n_components).fit(y_ref, dataset_id=ref.dataset_id)
        x_ref = pca.transform(y_ref)
        x_test = pca.transform(y_test)
    elif pca_mode == "joint":
        pca = PcaCompressor(n_components).fit(
            np.vstack([y_ref, y_test]), dataset_id="joint")
        x_ref = pca.transform(y_ref)
        x_test = pca.transform(y_test)
    else:
        x_ref = PcaCompressor(n_components).fit(
            y_ref, dataset_id=ref.dataset_id).transform(y_ref)
        x_test = PcaCompressor(n_components).fit(
            y_test, dataset_id=test.dataset_id).transform(y_test)
    ggd_ref = fit_ggd(x_ref.ravel())
    ggd_test = fit_ggd(x_test.ravel())
    return ggd_kld(ggd_ref, ggd_test), ggd_ref, ggd_test


class SrgaScorer(BaseEstimator):
    """Fit on a reference feature set, then score test feature sets.

    Under the default "ref" projection mode the projection and the
    reference distribution are fit once and reused for every test set;
    the other modes recompute the projection per test pair.
    """

    def __init__(self, n_components: int = DEFAULT_COMPONENTS,
                 delta: float = DEFAULT_DELTA, pca_mode: str = "ref"):
        self.n_components = n_components
        self.delta = delta
        self.pca_mode = pca_mode

    def fit(self, ref: FeatureSet, y=None):
        if self.pca_mode not in PCA_MODES:
            raise ValidationError(
                f"pca_mode must be one of {PCA_MODES}, got {self.pca_mode!r}")
        self.ref_ = ref
        if self.pca_mode == "ref":
            y_ref = flatten(ref)
            if y_ref.shape[0] < self.n_components + 1:
                raise ValidationError(
                    f"reference set has N={y_ref.shape[0]} tensors; need "
                    f"N >= D+1 = {self.n_components + 1}")
            self.pca_ = PcaCompressor(self.n_components).fit(
                y_ref, dataset_id=ref.dataset_id)
            self.ggd_ref_ = fit_ggd(self.pca_.transform(y_ref).ravel())
        return self

    def score_features(self, test: FeatureSet) -> SrgaEntry:
        if not hasattr(self, "ref_"):
            raise ValidationError("scorer is not fitted")
        if self.pca_mode == "ref":
            _check_compatible(self.ref_, test)
            y_test = flatten(test)
            if y_test.shape[0] < self.n_components + 1:
                raise ValidationError(
                    f"test set has N={y_test.shape[0]} tensors; need "
                    f"N >= D+1 = {self.n_components + 1}")
            ggd_test = fit_ggd(self.pca_.transform(y_test).ravel())
            fdd = ggd_kld(self.ggd_ref_, ggd_test)
            ggd_ref = self.ggd_ref_
        else:
            fdd, ggd_ref, ggd_test = compute_fdd(
                self.ref_, test, self.n_components, self.pca_mode)
        return SrgaEntry(
            test_id=test.dataset_id,
            fdd=fdd,
            srga=srga_index(fdd, self.delta),
            ggd_ref=ggd_ref,
            ggd_test=ggd_test,
        )

    def report(self, tests, model_id: str | None = None) -> SrgaReport:
        tests = list(tests)
        if not tests:
            raise ValidationError("no test feature sets given")
        for test in tests:
            if test.dataset_id == self.ref_.dataset_id:
                raise ValidationError(
                    f"test dataset {test.dataset_id!r} equals the reference; "
                    "the reference is excluded from scoring")
        entries = [self.score_features(test) for test in tests]
        return SrgaReport(
            model_id=model_id or self.ref_.model_id,
            reference_id=self.ref_.dataset_id,
            delta=self.delta,
            entries=entries,
            msrga=msrga([e.srga for e in entries]),
            n_components=self.n_components,
            pca_mode=self.pca_mode,
        )


# ---------------------------------------------------------------------------
# harnesses: severity sweeps, luminance jitter, content splits

SWEEP_CSV_HEADER = ("degradation_param", "srga", "fdd", "alpha", "sigma")


def score_datasets(ref: FeatureSet, tests, *,
                   n_components: int = DEFAULT_COMPONENTS,
                   delta: float = DEFAULT_DELTA, pca_mode: str = "ref",
                   model_id: str | None = None) -> SrgaReport:
    """One-shot report over already-extracted feature sets."""
    scorer = SrgaScorer(n_components=n_components, delta=delta,
                        pca_mode=pca_mode).fit(ref)
    return scorer.report(tests, model_id=model_id)


def run_sweep(extractor, hr_patches, ref_spec, test_specs, *,
              n_components: int = DEFAULT_COMPONENTS,
              delta: float = DEFAULT_DELTA, pca_mode: str = "ref",
              threads: int = 1) -> tuple[SrgaReport, str]:
    """Degradation-severity sweep over one shared HR patch pool.

    Synthesizes the reference subset and each test subset from the same
    HR patches, extracts features with the given extractor, and scores
    each test subset against the reference. Test specs are ordered by
    their severity scalar. Returns the report and the plot-ready CSV
    (degradation_param, srga, fdd, alpha, sigma).
    """
    from .degrade import degrade_patches

    test_specs = sorted(test_specs, key=lambda s: s.severity)
    if not test_specs:
        raise ValidationError("no test degradation specs given")
    ref_lr = degrade_patches(hr_patches, ref_spec, threads=threads)
    ref_features = extractor.extract(ref_lr, dataset_id=ref_spec.name)
    scorer = SrgaScorer(n_components=n_components, delta=delta,
                        pca_mode=pca_mode).fit(ref_features)
    entries = []
    rows = []
    for spec in test_specs:
        if spec.name == ref_spec.name:
            raise ValidationError(
                f"test spec {spec.name!r} equals the reference spec")
        lr = degrade_patches(hr_patches, spec, threads=threads)
        features = extractor.extract(lr, dataset_id=spec.name)
        entry = scorer.score_features(features)
        entries.append(entry)
        rows.append((spec.severity[0], entry.srga, entry.fdd,
                     entry.ggd_test.alpha, entry.ggd_test.sigma))
    report = SrgaReport(
        model_id=ref_features.model_id,
        reference_id=ref_spec.name,
        delta=delta,
        entries=entries,
        msrga=msrga([e.srga for e in entries]),
        n_components=n_components,
        pca_mode=pca_mode,
    )
    return report, write_csv(rows, SWEEP_CSV_HEADER)


JITTER_CSV_HEADER = ("lum_delta", "srga", "fdd", "alpha", "sigma")


def run_jitter(extractor, hr_patches, ref_spec, test_spec, deltas, *,
               n_components: int = DEFAULT_COMPONENTS,
               delta: float = DEFAULT_DELTA, pca_mode: str = "ref",
               threads: int = 1) -> list[tuple[float, SrgaEntry]]:
    """Score one test degradation under a sweep of global luminance
    offsets applied to the degraded test patches.

    Offset 0 reproduces the un-jittered score exactly. Returns
    (lum_delta, entry) pairs in the given delta order.
    """
    from .degrade import degrade_array, degrade_patches, quantize

    deltas = [float(d) for d in deltas]
    if not deltas:
        raise ValidationError("no luminance offsets given")
    ref_lr = degrade_patches(hr_patches, ref_spec, threads=threads)
    ref_features = extractor.extract(ref_lr, dataset_id=ref_spec.name)
    scorer = SrgaScorer(n_components=n_components, delta=delta,
                        pca_mode=pca_mode).fit(ref_features)
    # degrade once in float, then apply each offset before quantization
    lr_float = [degrade_array(np.asarray(p), test_spec, i)
                for i, p in enumerate(hr_patches)]
    results = []
    for lum in deltas:
        patches = [quantize(arr + lum) for arr in lr_float]
        features = extractor.extract(
            patches, dataset_id=f"{test_spec.name}+lum{lum:+g}")
        results.append((lum, scorer.score_features(features)))
    return results


def jitter_csv(results) -> str:
    rows = [(lum, e.srga, e.fdd, e.ggd_test.alpha, e.ggd_test.sigma)
            for lum, e in results]
    return write_csv(rows, JITTER_CSV_HEADER)


def split_indices(n_total: int, size: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Two disjoint equal-size index subsets from a seeded permutation."""
    if 2 * size > n_total:
        raise ValidationError(
            f"cannot draw two disjoint subsets of {size} from {n_total}")
    key = np.array([seed & ((1 << 64) - 1), 0x5f3759df], dtype=np.uint64)
    perm = np.random.Generator(np.random.Philox(key=key)).permutation(n_total)
    return np.sort(perm[:size]), np.sort(perm[size:2 * size])


def content_split_scores(features: FeatureSet, subsets, *,
                         n_components: int = DEFAULT_COMPONENTS,
                         delta: float = DEFAULT_DELTA) -> list[dict]:
    """Pairwise scores between disjoint content subsets of one dataset.

    `subsets` is a sequence of index arrays; they must be equal-sized and
    pairwise disjoint. The projection is fit once on the full dataset and
    shared by all subsets (refitting a near-full-rank basis on a subset
    would tie the basis to that subset's sampling noise and swamp the
    comparison); each subset then gets its own distribution fit, and
    every ordered pair is scored by their divergence.
    """
    subsets = [np.asarray(s) for s in subsets]
    if len(subsets) < 2:
        raise ValidationError("need at least two content subsets")
    size = len(subsets[0])
    for s in subsets:
        if len(s) != size:
            raise ValidationError("content subsets must be equal-sized")
    for i in range(len(subsets)):
        for j in range(i + 1, len(subsets)):
            if np.intersect1d(subsets[i], subsets[j]).size:
                raise ValidationError(
                    f"content subsets {i} and {j} overlap; they must be "
                    "disjoint")
    y = flatten(features)
    pca = PcaCompressor(n_components).fit(y, dataset_id=features.dataset_id)
    fitted = [fit_ggd(pca.transform(y[idx]).ravel()) for idx in subsets]
    results = []
    for i in range(len(subsets)):
        for j in range(len(subsets)):
            if i == j:
                continue
            fdd = ggd_kld(fitted[i], fitted[j])
            results.append({
                "ref_subset": i, "test_subset": j,
                "fdd": fdd, "srga": srga_index(fdd, delta),
                "ggd_ref": fitted[i], "ggd_test": fitted[j],
            })
    return results


def convergence_table(features: FeatureSet, sizes=(50, 100, 200, 400, 800), *,
                      n_components: int = DEFAULT_COMPONENTS,
                      seed: int = 0,
                      projection: PcaCompressor | None = None) -> list[dict]:
    """Fitted (alpha, sigma) for nested random subsets of growing size.

    The projection is fit once on the full dataset (so subset size only
    affects the distribution fit) and the subsets are prefixes of one
    seeded permutation, i.e. nested. Pass a pre-fitted projection to
    amortize it across several permutation seeds.
    """
    n = features.n
    sizes = sorted(set(int(s) for s in sizes))
    if sizes[0] < 1 or sizes[-1] > n:
        raise ValidationError(
            f"subset sizes must lie in [1, {n}], got {sizes}")
    y = flatten(features)
    pca = projection
    if pca is None:
        pca = PcaCompressor(n_components).fit(y, dataset_id=features.dataset_id)
    key = np.array([seed & ((1 << 64) - 1), 0x51ed2701], dtype=np.uint64)
    perm = np.random.Generator(np.random.Philox(key=key)).permutation(n)
    table = []
    for size in sizes:
        x = pca.transform(y[np.sort(perm[:size])])
        params = fit_ggd(x.ravel())
        table.append({"size": size, "alpha": params.alpha,
                      "sigma": params.sigma})
    return table


def run_content_split(extractor, hr_patches, spec, split_seeds, *,
                      subset_size: int | None = None,
                      n_components: int = DEFAULT_COMPONENTS,
                      delta: float = DEFAULT_DELTA,
                      sizes=(50, 100, 200, 400, 800),
                      threads: int = 1) -> dict:
    """Content-stability harness over one degradation.

    For each resplit seed, two disjoint equal-size subsets of the same
    degraded dataset are scored against each other; the convergence table
    of fitted parameters versus subset size is reported alongside.
    """
    from .degrade import degrade_patches

    lr = degrade_patches(hr_patches, spec, threads=threads)
    features = extractor.extract(lr, dataset_id=spec.name)
    size = subset_size or features.n // 2
    splits = []
    for seed in split_seeds:
        part_a, part_b = split_indices(features.n, size, seed)
        scores = content_split_scores(features, [part_a, part_b],
                                      n_components=n_components, delta=delta)
        splits.append({"seed": seed, "scores": scores})
    usable_sizes = [s for s in sizes if s <= features.n]
    return {
        "dataset_id": spec.name,
        "subset_size": size,
        "splits": splits,
        "convergence": convergence_table(
            features, usable_sizes, n_components=n_components),
    }
