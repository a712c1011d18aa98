"""Run configuration: flat ``key = value`` files validated with voluptuous."""

from __future__ import annotations

import logging
import math
import os
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import voluptuous as vol

from .const import (
    BASELINE_FINETUNE,
    BASELINE_SCRATCH,
    CONF_BASELINE,
    CONF_BASELINE_TRIALS,
    CONF_BATCH_SIZE,
    CONF_CHECKPOINT,
    CONF_CLASSES_PER_TASK,
    CONF_DIM,
    CONF_EPOCHS,
    CONF_GOAL,
    CONF_GOAL_MODE,
    CONF_GOAL_OFFSET,
    CONF_GROWTH_NOISE,
    CONF_HIDDEN,
    CONF_INCREMENT_FRACTION,
    CONF_LR,
    CONF_MASK_LR,
    CONF_MAX_EPOCHS,
    CONF_MAX_EXPANSION,
    CONF_MAX_RETRIES,
    CONF_MIN_REMAINING,
    CONF_MOMENTUM,
    CONF_N_TASKS,
    CONF_ORDER_SEED,
    CONF_PER_CLASS,
    CONF_PICK_ALL,
    CONF_PICK_EPOCHS,
    CONF_REPORT,
    CONF_RESET_ON_GROW,
    CONF_RETRAIN_EPOCHS,
    CONF_REUSE_SHADOW,
    CONF_SEED,
    CONF_SEP,
    CONF_SHADOW_INIT,
    CONF_STEP_FRACTION,
    CONF_TASK_SOURCE,
    CONF_TEST_CSV,
    CONF_TEST_IMAGES,
    CONF_TEST_LABELS,
    CONF_THRESHOLD,
    CONF_TOP_DELTA,
    CONF_TRAIN_CSV,
    CONF_TRAIN_IMAGES,
    CONF_TRAIN_LABELS,
    DEFAULT_BASELINE_TRIALS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_CLASSES_PER_TASK,
    DEFAULT_DIM,
    DEFAULT_EPOCHS,
    DEFAULT_GOAL,
    DEFAULT_GOAL_OFFSET,
    DEFAULT_GROWTH_NOISE,
    DEFAULT_HIDDEN,
    DEFAULT_INCREMENT_FRACTION,
    DEFAULT_LR,
    DEFAULT_MASK_LR,
    DEFAULT_MAX_EPOCHS,
    DEFAULT_MAX_EXPANSION,
    DEFAULT_MAX_RETRIES,
    DEFAULT_MIN_REMAINING,
    DEFAULT_MOMENTUM,
    DEFAULT_N_TASKS,
    DEFAULT_ORDER_SEED,
    DEFAULT_PER_CLASS,
    DEFAULT_PICK_EPOCHS,
    DEFAULT_RETRAIN_EPOCHS,
    DEFAULT_SEED,
    DEFAULT_SEP,
    DEFAULT_SHADOW_INIT,
    DEFAULT_STEP_FRACTION,
    DEFAULT_THRESHOLD,
    DEFAULT_TOP_DELTA,
    ENV_SEED,
    GOAL_EXPLICIT,
    GOAL_MODES,
    MAX_SEED,
    SOURCE_CSV,
    SOURCE_IDX,
    SOURCE_SYNTHETIC,
)
from .controller import GrowthPolicy
from .errors import ConfigError
from .pruner import PruneSchedule
from .training import Hyper

_LOGGER = logging.getLogger(__name__)


def _widths(value: Any) -> tuple[int, ...]:
    """Parse ``64,32`` into a tuple of positive widths."""
    if isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = [part for part in str(value).split(",") if part.strip()]
    try:
        widths = tuple(int(part) for part in parts)
    except (TypeError, ValueError) as err:
        raise vol.Invalid(f"expected comma-separated integers, got {value!r}") from err
    if not widths or min(widths) < 1:
        raise vol.Invalid("hidden widths must be positive")
    return widths


def _finite(value: float) -> float:
    if not math.isfinite(value):
        raise vol.Invalid(f"expected a finite number, got {value!r}")
    return value


def _positive_int(minimum: int = 1) -> vol.All:
    return vol.All(vol.Coerce(int), vol.Range(min=minimum))


def _seed() -> vol.All:
    return vol.All(vol.Coerce(int), vol.Range(min=0, max=MAX_SEED))


def _real(**bounds: Any) -> vol.All:
    if not bounds:
        return vol.All(vol.Coerce(float), _finite)
    return vol.All(vol.Coerce(float), _finite, vol.Range(**bounds))


def _fraction(min_included: bool = True, max_included: bool = True) -> vol.All:
    return _real(min=0.0, max=1.0, min_included=min_included, max_included=max_included)


CONFIG_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_SEED, default=DEFAULT_SEED): _seed(),
        vol.Optional(CONF_TASK_SOURCE, default=SOURCE_SYNTHETIC): vol.In(
            [SOURCE_SYNTHETIC, SOURCE_IDX, SOURCE_CSV]
        ),
        vol.Optional(CONF_N_TASKS, default=DEFAULT_N_TASKS): _positive_int(),
        vol.Optional(
            CONF_CLASSES_PER_TASK, default=DEFAULT_CLASSES_PER_TASK
        ): _positive_int(),
        vol.Optional(CONF_DIM, default=DEFAULT_DIM): _positive_int(),
        vol.Optional(CONF_PER_CLASS, default=DEFAULT_PER_CLASS): _positive_int(2),
        vol.Optional(CONF_SEP, default=DEFAULT_SEP): _real(min=0.0),
        vol.Optional(CONF_TRAIN_IMAGES): str,
        vol.Optional(CONF_TRAIN_LABELS): str,
        vol.Optional(CONF_TEST_IMAGES): str,
        vol.Optional(CONF_TEST_LABELS): str,
        vol.Optional(CONF_TRAIN_CSV): str,
        vol.Optional(CONF_TEST_CSV): str,
        vol.Optional(CONF_ORDER_SEED, default=DEFAULT_ORDER_SEED): _seed(),
        vol.Optional(CONF_HIDDEN, default=DEFAULT_HIDDEN): _widths,
        vol.Optional(CONF_GOAL_MODE, default=GOAL_EXPLICIT): vol.In(GOAL_MODES),
        vol.Optional(CONF_GOAL, default=DEFAULT_GOAL): _fraction(),
        vol.Optional(CONF_GOAL_OFFSET, default=DEFAULT_GOAL_OFFSET): _real(
            min=-1.0, max=1.0
        ),
        vol.Optional(CONF_TOP_DELTA, default=DEFAULT_TOP_DELTA): _fraction(),
        vol.Optional(CONF_BASELINE, default=BASELINE_SCRATCH): vol.In(
            [BASELINE_SCRATCH, BASELINE_FINETUNE]
        ),
        vol.Optional(
            CONF_BASELINE_TRIALS, default=DEFAULT_BASELINE_TRIALS
        ): _positive_int(),
        vol.Optional(CONF_STEP_FRACTION, default=DEFAULT_STEP_FRACTION): _fraction(
            min_included=False, max_included=False
        ),
        vol.Optional(
            CONF_RETRAIN_EPOCHS, default=DEFAULT_RETRAIN_EPOCHS
        ): _positive_int(),
        vol.Optional(CONF_MIN_REMAINING, default=DEFAULT_MIN_REMAINING): _positive_int(
            0
        ),
        vol.Optional(
            CONF_INCREMENT_FRACTION, default=DEFAULT_INCREMENT_FRACTION
        ): _real(min=0.0, min_included=False),
        vol.Optional(CONF_MAX_EXPANSION, default=DEFAULT_MAX_EXPANSION): _real(min=1.0),
        vol.Optional(CONF_MAX_RETRIES, default=DEFAULT_MAX_RETRIES): _positive_int(0),
        vol.Optional(CONF_RESET_ON_GROW, default=False): vol.Boolean(),
        vol.Optional(CONF_REUSE_SHADOW, default=True): vol.Boolean(),
        vol.Optional(CONF_PICK_ALL, default=False): vol.Boolean(),
        vol.Optional(CONF_LR, default=DEFAULT_LR): _real(min=0.0, min_included=False),
        vol.Optional(CONF_MOMENTUM, default=DEFAULT_MOMENTUM): _fraction(
            max_included=False
        ),
        vol.Optional(CONF_MASK_LR, default=DEFAULT_MASK_LR): _real(min=0.0),
        vol.Optional(CONF_THRESHOLD, default=DEFAULT_THRESHOLD): _real(),
        vol.Optional(CONF_SHADOW_INIT, default=DEFAULT_SHADOW_INIT): _real(),
        vol.Optional(CONF_BATCH_SIZE, default=DEFAULT_BATCH_SIZE): _positive_int(),
        vol.Optional(CONF_EPOCHS, default=DEFAULT_EPOCHS): _positive_int(),
        vol.Optional(CONF_MAX_EPOCHS, default=DEFAULT_MAX_EPOCHS): _positive_int(),
        vol.Optional(CONF_PICK_EPOCHS, default=DEFAULT_PICK_EPOCHS): _positive_int(),
        vol.Optional(CONF_GROWTH_NOISE, default=DEFAULT_GROWTH_NOISE): _real(min=0.0),
        vol.Optional(CONF_CHECKPOINT): str,
        vol.Optional(CONF_REPORT): str,
    },
    extra=vol.PREVENT_EXTRA,
)

REQUIRED_BY_SOURCE = {
    SOURCE_SYNTHETIC: (),
    SOURCE_IDX: (CONF_TRAIN_IMAGES, CONF_TRAIN_LABELS),
    SOURCE_CSV: (CONF_TRAIN_CSV,),
}


def parse_config_text(text: str) -> dict[str, str]:
    """Split ``key = value`` lines into a dict of raw strings.

    ``#`` starts a comment; blank lines are skipped.
    """
    raw: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        key, sep, value = content.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"Line {line_no}: expected 'key = value', got {line!r}")
        if key in raw:
            raise ConfigError(f"Line {line_no}: duplicate key {key!r}")
        raw[key] = value
    return raw


def validate_config(
    raw: Mapping[str, Any], environ: Mapping[str, str] | None = None
) -> dict[str, Any]:
    """Coerce and range-check a raw config, applying the seed override.

    Raises:
        ConfigError: On unknown keys, bad values or missing data paths
    """
    try:
        config: dict[str, Any] = CONFIG_SCHEMA(dict(raw))
    except vol.Invalid as err:
        raise ConfigError(f"Invalid configuration: {err}") from err

    environ = os.environ if environ is None else environ
    override = environ.get(ENV_SEED)
    if override is not None:
        try:
            seed = int(override)
        except ValueError as err:
            raise ConfigError(f"{ENV_SEED} must be an integer, got {override!r}") from err
        if not 0 <= seed <= MAX_SEED:
            raise ConfigError(f"{ENV_SEED} must be between 0 and {MAX_SEED}")
        _LOGGER.warning(
            "%s overrides configured seed %d with %d", ENV_SEED, config[CONF_SEED], seed
        )
        config[CONF_SEED] = seed

    missing = [
        key for key in REQUIRED_BY_SOURCE[config[CONF_TASK_SOURCE]] if key not in config
    ]
    if missing:
        raise ConfigError(
            f"Task source {config[CONF_TASK_SOURCE]!r} needs {', '.join(missing)}"
        )
    if (CONF_TEST_IMAGES in config) != (CONF_TEST_LABELS in config):
        raise ConfigError(f"Set both {CONF_TEST_IMAGES} and {CONF_TEST_LABELS}")
    return config


def load_config(
    path: str | Path, environ: Mapping[str, str] | None = None
) -> dict[str, Any]:
    """Read and validate a config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"Cannot read config {path}: {err}") from err
    return validate_config(parse_config_text(text), environ)


def hyper_from_config(config: Mapping[str, Any]) -> Hyper:
    """Return the optimisation settings of a validated config."""
    return Hyper(
        lr=config[CONF_LR],
        momentum=config[CONF_MOMENTUM],
        mask_lr=config[CONF_MASK_LR],
        threshold=config[CONF_THRESHOLD],
        shadow_init=config[CONF_SHADOW_INIT],
        batch_size=config[CONF_BATCH_SIZE],
        epochs=config[CONF_EPOCHS],
        max_epochs=config[CONF_MAX_EPOCHS],
        pick_epochs=config[CONF_PICK_EPOCHS],
        growth_noise=config[CONF_GROWTH_NOISE],
        reset_on_grow=config[CONF_RESET_ON_GROW],
        reuse_shadow=config[CONF_REUSE_SHADOW],
        pick_all=config[CONF_PICK_ALL],
    )


def schedule_from_config(config: Mapping[str, Any]) -> PruneSchedule:
    """Return the pruning schedule of a validated config."""
    return PruneSchedule(
        step_fraction=config[CONF_STEP_FRACTION],
        retrain_epochs=config[CONF_RETRAIN_EPOCHS],
        min_remaining=config[CONF_MIN_REMAINING],
    )


def policy_from_config(config: Mapping[str, Any]) -> GrowthPolicy:
    """Return the growth policy of a validated config."""
    return GrowthPolicy(
        increment_fraction=config[CONF_INCREMENT_FRACTION],
        max_expansion=config[CONF_MAX_EXPANSION],
        max_retries=config[CONF_MAX_RETRIES],
    )
