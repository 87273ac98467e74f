"""Run configuration: a small sectioned text format.

The file is `key = value` lines grouped under `[section]` headers, with
`#` comments. The schema is closed: unknown sections or keys fail with
the offending line number, as do type errors and duplicate keys. `mode`
and `symmetry` may repeat. parse -> serialize -> parse is the identity.
"""

from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError

_REPEATABLE = {"mode", "symmetry"}


@dataclass(frozen=True)
class GridConfig:
    space: str = "so3"
    t_est: tuple = (0.0, 0.0, 1.0)
    diameter: float = 0.3
    sigma: float = 1.0 / 6.0
    depth: int = 4
    cubic: bool = False


@dataclass(frozen=True)
class TargetConfig:
    # mode entries: (qw qx qy qz kappa [tx ty tz pos_std] [weight])
    mode: tuple = ()
    # symmetry entries: (axis_x axis_y axis_z order)
    symmetry: tuple = ()


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "analytic"
    keypoints: str = "cube"
    n_keypoints: int = 16
    channels: int = 8
    splat_radii: tuple = (2.5, 6.0)
    fx: float = 320.0
    fy: float = 320.0
    cx: float = 64.0
    cy: float = 64.0
    width: int = 128
    height: int = 128
    feature_seed: int = 0


@dataclass(frozen=True)
class InferenceConfig:
    top_k: int = 512
    depth: int = None  # unset means: use the grid depth


@dataclass(frozen=True)
class TrainingConfig:
    steps: int = 2000
    batch_size: int = 16
    learning_rate: float = 0.1
    importance_sampling: bool = True
    n_trajectories: int = 128
    n_uniform_negatives: int = 1024
    jitter: bool = True
    jitter_translation: float = 0.5
    dropout: float = 0.0
    eval_every: int = 500
    eval_samples: int = 256
    eval_top_k: int = 128


@dataclass(frozen=True)
class IoConfig:
    belief: str = None
    weights: str = None
    report: str = None
    image: str = None


@dataclass(frozen=True)
class VizConfig:
    recursion: int = 3
    axis: tuple = (1.0, 0.0, 0.0)
    grayscale: bool = False
    image_width: int = 720


@dataclass(frozen=True)
class TruthConfig:
    rotation: tuple = None
    position: tuple = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    grid: GridConfig = field(default_factory=GridConfig)
    target: TargetConfig = field(default_factory=TargetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    io: IoConfig = field(default_factory=IoConfig)
    viz: VizConfig = field(default_factory=VizConfig)
    truth: TruthConfig = field(default_factory=TruthConfig)


# key -> value kind, per section ("" is the top level)
_SCHEMA = {
    "": {"seed": "int"},
    "grid": {
        "space": "choice:so3,se3",
        "t_est": "vec3",
        "diameter": "pos_float",
        "sigma": "pos_float",
        "depth": "int",
        "cubic": "bool",
    },
    "target": {"mode": "mode", "symmetry": "symmetry"},
    "model": {
        "kind": "choice:uniform,analytic,keypoint",
        "keypoints": "str",
        "n_keypoints": "int",
        "channels": "int",
        "splat_radii": "floats",
        "fx": "pos_float",
        "fy": "pos_float",
        "cx": "float",
        "cy": "float",
        "width": "int",
        "height": "int",
        "feature_seed": "int",
    },
    "inference": {"top_k": "int", "depth": "int"},
    "training": {
        "steps": "int",
        "batch_size": "int",
        "learning_rate": "pos_float",
        "importance_sampling": "bool",
        "n_trajectories": "int",
        "n_uniform_negatives": "int",
        "jitter": "bool",
        "jitter_translation": "float",
        "dropout": "float",
        "eval_every": "int",
        "eval_samples": "int",
        "eval_top_k": "int",
    },
    "io": {"belief": "str", "weights": "str", "report": "str", "image": "str"},
    "viz": {
        "recursion": "int",
        "axis": "vec3",
        "grayscale": "bool",
        "image_width": "int",
    },
    "truth": {"rotation": "vec4", "position": "vec3"},
}

_SECTION_TYPES = {
    "grid": GridConfig,
    "target": TargetConfig,
    "model": ModelConfig,
    "inference": InferenceConfig,
    "training": TrainingConfig,
    "io": IoConfig,
    "viz": VizConfig,
    "truth": TruthConfig,
}


def _parse_value(kind, raw, path, line_no):
    def fail(why):
        raise ConfigError(why, path=path, line=line_no)

    parts = raw.split()
    try:
        if kind == "int":
            return int(raw)
        if kind in ("float", "pos_float"):
            v = float(raw)
            if kind == "pos_float" and not v > 0:
                fail(f"expected a positive number, got {raw!r}")
            return v
        if kind == "bool":
            if raw == "true":
                return True
            if raw == "false":
                return False
            fail(f"expected true or false, got {raw!r}")
        if kind == "str":
            return raw
        if kind.startswith("choice:"):
            allowed = kind.split(":", 1)[1].split(",")
            if raw not in allowed:
                fail(f"expected one of {', '.join(allowed)}, got {raw!r}")
            return raw
        if kind == "vec3":
            if len(parts) != 3:
                fail(f"expected 3 numbers, got {len(parts)}")
            return tuple(float(p) for p in parts)
        if kind == "vec4":
            if len(parts) != 4:
                fail(f"expected 4 numbers, got {len(parts)}")
            return tuple(float(p) for p in parts)
        if kind == "floats":
            if not parts:
                fail("expected at least one number")
            return tuple(float(p) for p in parts)
        if kind == "mode":
            if len(parts) not in (5, 6, 9, 10):
                fail(
                    "mode takes 5 or 6 numbers (rotation only) or 9 or 10"
                    f" (with position), got {len(parts)}"
                )
            return tuple(float(p) for p in parts)
        if kind == "symmetry":
            if len(parts) != 4:
                fail(f"symmetry takes axis (3 numbers) and order, got {len(parts)}")
            axis = tuple(float(p) for p in parts[:3])
            order = int(parts[3])
            if order < 1:
                fail(f"symmetry order must be >= 1, got {order}")
            return axis + (order,)
    except ValueError:
        fail(f"could not parse {raw!r} as {kind}")
    raise AssertionError(f"unhandled kind {kind}")


def parse(text, path="<config>"):
    """Parse config text into a RunConfig; errors carry line numbers."""
    section = ""
    seen = set()
    values = {name: {} for name in _SCHEMA}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("malformed section header", path=path, line=line_no)
            name = stripped[1:-1].strip()
            if name not in _SCHEMA or name == "":
                raise ConfigError(f"unknown section [{name}]", path=path, line=line_no)
            section = name
            continue
        if "=" not in stripped:
            raise ConfigError(
                f"expected key = value, got {stripped!r}", path=path, line=line_no
            )
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        schema = _SCHEMA[section]
        if key not in schema:
            where = f"[{section}]" if section else "the top level"
            raise ConfigError(f"unknown key {key!r} in {where}", path=path, line=line_no)
        value = _parse_value(schema[key], raw, path, line_no)
        if key in _REPEATABLE:
            values[section].setdefault(key, []).append(value)
        else:
            if (section, key) in seen:
                raise ConfigError(f"duplicate key {key!r}", path=path, line=line_no)
            seen.add((section, key))
            values[section][key] = value
    kwargs = dict(values[""])
    for name, cls in _SECTION_TYPES.items():
        sec = dict(values[name])
        for key in _REPEATABLE:
            if key in sec:
                sec[key] = tuple(sec[key])
        kwargs[name] = cls(**sec)
    return RunConfig(**kwargs)


def load(path):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}", path=path)
    return parse(text, path=path)


def replace_seed(cfg, seed):
    return replace(cfg, seed=int(seed))


def inference_depth(cfg):
    return cfg.grid.depth if cfg.inference.depth is None else cfg.inference.depth


def _format_value(kind, value):
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("vec3", "vec4", "floats", "mode"):
        return " ".join(repr(float(v)) for v in value)
    if kind == "symmetry":
        return " ".join(repr(float(v)) for v in value[:3]) + f" {int(value[3])}"
    return str(value)


def serialize(cfg):
    """Canonical text for a RunConfig (schema order, defaults included)."""
    lines = [f"seed = {cfg.seed}", ""]
    for name in _SECTION_TYPES:
        sec = getattr(cfg, name)
        body = []
        for f in fields(sec):
            kind = _SCHEMA[name][f.name]
            value = getattr(sec, f.name)
            if value is None:
                continue
            if f.name in _REPEATABLE:
                for entry in value:
                    body.append(f"{f.name} = {_format_value(kind, entry)}")
            else:
                body.append(f"{f.name} = {_format_value(kind, value)}")
        if body:
            lines.append(f"[{name}]")
            lines.extend(body)
            lines.append("")
    return "\n".join(lines)


def build_grid(cfg):
    import numpy as np

    from . import r3_grid
    from .pyramid import SE3Pyramid, SO3Pyramid

    t_est = np.array(cfg.grid.t_est)
    if cfg.grid.space == "so3":
        return SO3Pyramid(t_est=t_est)
    make = r3_grid.cubic_bounds if cfg.grid.cubic else r3_grid.detection_bounds
    return SE3Pyramid(bounds=make(t_est, cfg.grid.diameter))


def build_target(cfg, path="<config>"):
    import numpy as np

    from . import quat, targets

    if not cfg.target.mode:
        raise ConfigError("this command needs at least one [target] mode", path=path)
    modes = []
    for m in cfg.target.mode:
        rotation = quat.canonical(quat.normalize(np.array(m[:4])))
        kappa = m[4]
        if len(m) in (5, 6):
            modes.append(
                targets.Mode(
                    rotation=rotation,
                    kappa=kappa,
                    weight=m[5] if len(m) == 6 else 1.0,
                )
            )
        else:
            modes.append(
                targets.Mode(
                    rotation=rotation,
                    kappa=kappa,
                    position=np.array(m[5:8]),
                    pos_std=m[8],
                    weight=m[9] if len(m) == 10 else 1.0,
                )
            )
    generators = [
        quat.from_axis_angle(np.array(s[:3]), 2.0 * np.pi / s[3])
        for s in cfg.target.symmetry
    ]
    return targets.AnalyticPoseTarget(modes, symmetry=generators or None)


def build_camera(cfg):
    from .keypoints import Camera

    m = cfg.model
    return Camera(fx=m.fx, fy=m.fy, cx=m.cx, cy=m.cy, width=m.width, height=m.height)


def build_extractor(cfg, target, path="<config>"):
    """Feature extractor over a synthetic scene built from the target."""
    import numpy as np

    from . import keypoints

    camera = build_camera(cfg)
    if cfg.model.keypoints == "cube":
        kps = keypoints.cube_keypoints(cfg.grid.diameter)
    else:
        kps = keypoints.load_points(cfg.model.keypoints)
    if cfg.model.n_keypoints < len(kps):
        kps = keypoints.farthest_point_sample(kps, cfg.model.n_keypoints)
    t_est = np.array(cfg.grid.t_est)
    poses = [
        (m.rotation, m.position if m.position is not None else t_est)
        for m in target.modes
    ]
    weights = [m.weight for m in target.modes]
    rng = np.random.default_rng(cfg.model.feature_seed)
    fmap = keypoints.scene_feature_map(
        camera, kps, poses, weights, cfg.model.channels, cfg.model.splat_radii, rng
    )
    return keypoints.FeatureExtractor(
        camera, kps, fmap, sentinel_seed=cfg.model.feature_seed
    )


def build_model(cfg, path="<config>"):
    """Scoring model for inference commands, per model.kind."""
    from .heads import KeypointHead
    from .models import AnalyticModel, KeypointModel, UniformModel

    kind = cfg.model.kind
    if kind == "uniform":
        return UniformModel()
    target = build_target(cfg, path)
    if kind == "analytic":
        return AnalyticModel(target)
    if cfg.io.weights is None:
        raise ConfigError("model kind keypoint needs io.weights", path=path)
    return KeypointModel(build_extractor(cfg, target, path), KeypointHead.load(cfg.io.weights))


def build_train_config(cfg):
    from .training import TrainConfig

    t = cfg.training
    return TrainConfig(
        depth=cfg.grid.depth,
        steps=t.steps,
        batch_size=t.batch_size,
        learning_rate=t.learning_rate,
        use_importance_sampling=t.importance_sampling,
        n_trajectories=t.n_trajectories,
        n_uniform_negatives=t.n_uniform_negatives,
        jitter=t.jitter,
        jitter_translation=t.jitter_translation,
        dropout=t.dropout,
        eval_every=t.eval_every,
        eval_samples=t.eval_samples,
        eval_top_k=t.eval_top_k,
        seed=cfg.seed,
    )


def validate(cfg, path="<config>"):
    """Cross-field checks that need more than one key."""
    if not 0 <= cfg.grid.depth <= 7:
        raise ConfigError(f"grid depth must be in [0, 7], got {cfg.grid.depth}", path=path)
    if cfg.inference.depth is not None and not 0 <= cfg.inference.depth <= cfg.grid.depth:
        raise ConfigError(
            f"inference depth {cfg.inference.depth} exceeds grid depth {cfg.grid.depth}",
            path=path,
        )
    if cfg.inference.top_k < 1:
        raise ConfigError("inference top_k must be >= 1", path=path)
    if cfg.grid.space == "se3":
        for m in cfg.target.mode:
            if len(m) < 9:
                raise ConfigError(
                    "se3 target modes need position and pos_std (9 or 10 numbers)",
                    path=path,
                )
    if not 0.0 <= cfg.training.dropout < 1.0:
        raise ConfigError("training dropout must be in [0, 1)", path=path)
    return cfg
