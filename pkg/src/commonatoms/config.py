"""Study configuration in INI format.

Example::

    [study]
    treatment = trial.csv
    rwd = rwd.csv, registry.csv
    schema = age:0, sex:2, stage:3
    outcome = survival            ; continuous | survival | none
    outcome_columns = time, status
    seed = 20240611
    output = results
    rao_blackwell = false       ; conditional-mean pi1 in the weights

    [chain]
    k = 15
    iters = 6000
    burn_in = 1000
    thin = 5

    [thresholds]
    auc = 0.6
    hr_target = 0.6
    t_star = 50

    [classifier]
    kind = logistic

Relative paths are resolved against the config file's directory. In the
schema, ``name:0`` is continuous and ``name:L`` categorical with L levels.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .cam_gibbs import ChainConfig, ResponseHyper
from .data_model import RWD, TREATMENT, CovariateSchema, StudyData, load_csv, merge_historical
from .equivalence_check import ClassifierConfig

__all__ = ["ConfigError", "StudyConfig", "load_config", "parse_schema"]


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


def parse_schema(text: str) -> CovariateSchema:
    """``"age:0, sex:2"`` -> schema with a continuous and a binary column."""
    spec = []
    for item in filter(None, (s.strip() for s in text.replace("\n", ",").split(","))):
        name, sep, lev = item.partition(":")
        if not sep:
            raise ConfigError(f"schema entry {item!r} must look like name:levels")
        try:
            spec.append((name.strip(), int(lev)))
        except ValueError:
            raise ConfigError(f"schema entry {item!r}: levels must be an integer") from None
    if not spec:
        raise ConfigError("schema is empty")
    try:
        return CovariateSchema.from_spec(spec)
    except ValueError as e:
        raise ConfigError(f"schema: {e}") from None


def _list(text: str) -> list:
    return [s.strip() for s in text.split(",") if s.strip()]


@dataclass
class StudyConfig:
    """Everything a pipeline run needs."""

    treatment: Path
    rwd: list
    schema: CovariateSchema
    seed: int
    outcome: str = "none"
    outcome_columns: tuple = ("y", "status")
    output: Path = Path("results")
    chain: ChainConfig = field(default_factory=ChainConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    auc_threshold: float = 0.6
    hr_target: float = 0.6
    t_star: float = 50.0
    resample_ratio: float = 1.0
    rao_blackwell: bool = False
    source_text: str = ""

    def __post_init__(self):
        if self.outcome not in ("none", "continuous", "survival"):
            raise ConfigError(f"outcome must be none, continuous or survival, got {self.outcome!r}")

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.source_text.encode()).hexdigest()[:16]

    def check_files(self) -> None:
        for p in [self.treatment, *self.rwd]:
            if not Path(p).exists():
                raise FileNotFoundError(str(p))

    def load_study(self) -> StudyData:
        """Read the treatment arm and every RWD source (merged)."""
        self.check_files()
        oc = self.outcome_columns if self.outcome != "none" else None
        surv = self.outcome == "survival"
        trt = load_csv(self.treatment, self.schema, TREATMENT, oc, surv, source="trial")
        rwd = [load_csv(p, self.schema, RWD, oc, surv, source=Path(p).stem) for p in self.rwd]
        return StudyData(trt, merge_historical(rwd), {"config_hash": self.hash})


def _coerce(cls, section: configparser.SectionProxy, skip=()) -> dict:
    out = {}
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    for key, raw in section.items():
        if key in skip:
            continue
        if key not in types:
            raise ConfigError(f"[{section.name}] unknown key {key!r}")
        t = str(types[key])
        try:
            if "bool" in t:
                out[key] = section.getboolean(key)
            elif "int" in t and "float" not in t:
                out[key] = int(raw)
            elif "float" in t:
                out[key] = float(raw)
            else:
                out[key] = raw.strip()
        except ValueError:
            raise ConfigError(f"[{section.name}] {key} = {raw!r} has the wrong type") from None
    return out


def load_config(path, seed: int | None = None, output: str | None = None) -> StudyConfig:
    """Parse an INI study file; ``seed`` / ``output`` override the file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    text = path.read_text(encoding="utf-8")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    if "study" not in cp:
        raise ConfigError(f"{path}: missing [study] section")
    s = cp["study"]
    base = path.parent
    for key in ("treatment", "rwd", "schema"):
        if key not in s:
            raise ConfigError(f"{path}: [study] needs {key!r}")
    if seed is None:
        if "seed" not in s:
            raise ConfigError(f"{path}: [study] needs a seed (no wall-clock default)")
        seed = s.getint("seed")
    chain_kw = _coerce(ChainConfig, cp["chain"], skip=("response",)) if "chain" in cp else {}
    if "response" in cp:
        chain_kw["response"] = ResponseHyper(**_coerce(ResponseHyper, cp["response"]))
    chain_kw["seed"] = seed
    try:
        chain = ChainConfig(**chain_kw)
        clf = ClassifierConfig(**_coerce(ClassifierConfig, cp["classifier"])) \
            if "classifier" in cp else ClassifierConfig()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {e}") from None
    th = cp["thresholds"] if "thresholds" in cp else {}
    clf.threshold = float(th.get("auc", clf.threshold))
    cfg = StudyConfig(
        treatment=base / s["treatment"].strip(),
        rwd=[base / p for p in _list(s["rwd"])],
        schema=parse_schema(s["schema"]),
        seed=int(seed),
        outcome=s.get("outcome", "none").strip(),
        outcome_columns=tuple(_list(s.get("outcome_columns", "y, status"))),
        output=Path(output) if output else base / s.get("output", "results").strip(),
        chain=chain,
        classifier=clf,
        auc_threshold=clf.threshold,
        hr_target=float(th.get("hr_target", 0.6)),
        t_star=float(th.get("t_star", 50.0)),
        resample_ratio=float(s.get("resample_ratio", 1.0)),
        rao_blackwell=s.getboolean("rao_blackwell", False),
        source_text=f"{text}\n#seed={seed}",
    )
    return cfg
