"""
Experiment configuration
Validated experiment description loaded from YAML, with grid expansion and a
stable content hash
"""

import os
import json
import hashlib
import logging
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from core.mathematical_models.divergence import DivergenceKind, DivergenceSpec
from core.mathematical_models.empirical_risk import RegularizationWeights
from core.datasets.ssl_dataset import DATASET_PRESETS
from process_models.self_training.self_training_process import SelectionThresholds, SelfTrainConfig

logger = logging.getLogger(__name__)

# Fields without influence on results
NON_SEMANTIC_FIELDS = {'name', 'label', 'seeds'}


class ConfigurationError(ValueError):
    """Invalid experiment configuration; `fields` holds dotted paths of the offending entries"""

    def __init__(self, message: str, fields: Optional[List[str]] = None):
        super().__init__(message)
        self.fields = fields or []

    @classmethod
    def from_validation_error(cls, error: ValidationError) -> 'ConfigurationError':
        fields = []
        lines = []
        for item in error.errors():
            path = '.'.join(str(part) for part in item['loc']) or '<root>'
            fields.append(path)
            lines.append(f"{path}: {item['msg']}")
        return cls("Invalid experiment configuration:\n  " + "\n  ".join(lines), fields)


class Scenario(str, Enum):
    SL = "sl"
    FSL = "fsl"
    DP_SSL = "dp-ssl"
    DEM_SSL = "dem-ssl"

    @property
    def display_name(self) -> str:
        return self.value.upper()


SCENARIO_ORDER = [Scenario.SL, Scenario.DP_SSL, Scenario.DEM_SSL, Scenario.FSL]


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class SyntheticConfig(_Section):
    k: int = Field(26, ge=2, description="Number of classes")
    d: int = Field(16, ge=1, description="Feature dimension")
    per_class: int = Field(770, ge=1, description="Rows per class before proportions")
    spread: float = Field(0.35, gt=0.0, description="Within-class standard deviation")
    scale: float = Field(1.0, gt=0.0, description="Distance scale of the class means")
    class_proportions: Optional[List[float]] = Field(None, description="Relative class sizes")
    seed: int = Field(0, description="Generator seed")


class DatasetConfig(_Section):
    path: Optional[str] = Field(None, description="Sparse, CSV or .npz dataset file")
    n_features: Optional[int] = Field(None, ge=1, description="Dimension of sparse files")
    csv_header: bool = Field(False, description="CSV files start with a header row")
    synthetic: Optional[SyntheticConfig] = Field(None, description="Generated Gaussian mixture")
    n_labeled: int = Field(104, ge=1, description="Labeled training rows")
    n_test: int = Field(2000, ge=0, description="Held-out test rows")
    stratified: bool = Field(True, description="Balance labeled rows across classes")
    normalize: bool = Field(True, description="Standardize with training statistics")
    split_seed: Optional[int] = Field(None, description="Split seed; the run seed when unset")

    @model_validator(mode='after')
    def _one_source(self):
        if self.path is None and self.synthetic is None:
            self.synthetic = SyntheticConfig()
        if self.path is not None and self.synthetic is not None:
            raise ValueError("Set either dataset.path or dataset.synthetic, not both")
        return self

    @classmethod
    def from_preset(cls, name: str, data_dir: str = "data") -> 'DatasetConfig':
        """Synthetic presets generate rows; file presets read the LIBSVM sparse file from data_dir"""
        if name not in DATASET_PRESETS:
            raise ConfigurationError(f"Unknown dataset preset '{name}'", ['dataset.preset'])
        preset = dict(DATASET_PRESETS[name])
        split_fields = {key: preset.pop(key) for key in ('n_labeled', 'n_test')}
        if 'per_class' in preset:
            return cls(synthetic=SyntheticConfig(**preset), **split_fields)
        return cls(path=os.path.join(data_dir, preset['file']), n_features=preset['d'], **split_fields)


class DivergenceConfig(_Section):
    name: str = Field("kl", description="kl, tv, chi2, power, js, lecam, renyi")
    p: Optional[float] = Field(None, gt=1.0, description="Power divergence exponent")
    alpha: Optional[float] = Field(None, ge=0.0, description="Renyi order")

    @model_validator(mode='after')
    def _valid_spec(self):
        spec = self.to_spec()
        if spec.kind in (DivergenceKind.REVERSE_KL, DivergenceKind.SYMMETRIC_KL):
            raise ValueError(f"{spec.label} gives an infinite hard-label risk and cannot be trained")
        return self

    def to_spec(self) -> DivergenceSpec:
        return DivergenceSpec.from_name(self.name, p=self.p, alpha=self.alpha)


class SelectionConfig(_Section):
    tau_p: float = Field(0.7, ge=0.0, le=1.0, description="Confidence threshold")
    kappa_p: float = Field(0.005, ge=0.0, le=1.0, description="Uncertainty threshold")
    use_uncertainty: bool = Field(True, description="Apply the uncertainty gate")
    mc_passes: int = Field(10, ge=2, description="Dropout passes of the uncertainty estimate")

    def to_thresholds(self) -> SelectionThresholds:
        return SelectionThresholds(self.tau_p, self.kappa_p, self.use_uncertainty, self.mc_passes)


class RegularizationConfig(_Section):
    lambda_h: float = Field(0.4, ge=0.0, description="D-entropy weight")
    lambda_u: float = Field(0.8, ge=0.0, description="Class-marginal weight")

    def to_weights(self) -> RegularizationWeights:
        return RegularizationWeights(self.lambda_h, self.lambda_u)


class ModelConfig(_Section):
    hidden: int = Field(128, ge=1, description="Hidden width")
    hidden_layers: int = Field(2, ge=0, description="Hidden layers")
    dropout: float = Field(0.3, ge=0.0, lt=1.0, description="Dropout rate")


class OptimizerConfig(_Section):
    learning_rate: float = Field(0.03, gt=0.0, description="Initial learning rate")
    momentum: float = Field(0.9, ge=0.0, lt=1.0, description="Momentum")
    nesterov: bool = Field(True, description="Nesterov momentum")
    weight_decay: float = Field(0.0, ge=0.0, description="L2 weight decay")


class TrainingConfig(_Section):
    iterations: int = Field(5, ge=1, description="Self-training iterations, warm-up included")
    epochs: int = Field(64, ge=0, description="Epochs per iteration")
    batch_size: int = Field(512, ge=1, description="Mini-batch size")


class ScenarioVariant(_Section):
    """One result-table column"""
    scenario: Scenario
    label: Optional[str] = None
    selection: Optional[SelectionConfig] = None
    regularization: Optional[RegularizationConfig] = None
    balancing: Optional[bool] = None
    noise_rate: Optional[float] = Field(None, ge=0.0, le=1.0)

    @model_validator(mode='before')
    @classmethod
    def _from_name(cls, data: Any):
        if isinstance(data, str):
            return {'scenario': data.lower()}
        if isinstance(data, dict) and isinstance(data.get('scenario'), str):
            return {**data, 'scenario': data['scenario'].lower()}
        return data


class GridConfig(_Section):
    divergences: List[DivergenceConfig] = Field(default_factory=list)
    scenarios: List[ScenarioVariant] = Field(default_factory=list)


class ExperimentConfig(_Section):
    name: str = Field("experiment", description="Output file stem")
    label: Optional[str] = Field(None, description="Result-table column label")
    scenario: Scenario = Field(Scenario.SL, description="sl, fsl, dp-ssl or dem-ssl")
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    divergence: DivergenceConfig = Field(default_factory=DivergenceConfig)
    regularizer_divergence: Optional[DivergenceConfig] = Field(None, description="Divergence of the DEM regularizers")
    beta: Union[Literal['auto'], float] = Field('auto', description="Labeled-row mass, 'auto' for n/(n+m)")
    selection: Optional[SelectionConfig] = None
    regularization: Optional[RegularizationConfig] = None
    model: ModelConfig = Field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    seeds: List[int] = Field(default_factory=lambda: [1, 2, 3], min_length=1)
    balancing: bool = Field(True, description="Under-sample pseudo-labels to the minority class")
    noise_rate: float = Field(0.0, ge=0.0, le=1.0, description="Label-flip rate")
    grid: Optional[GridConfig] = None

    @field_validator('scenario', mode='before')
    @classmethod
    def _lower_scenario(cls, value: Any):
        return value.lower() if isinstance(value, str) else value

    @field_validator('beta')
    @classmethod
    def _beta_range(cls, value):
        if value != 'auto' and not 0.0 <= float(value) <= 1.0:
            raise ValueError(f"beta must lie in [0, 1] or be 'auto', got {value}")
        return value

    @model_validator(mode='after')
    def _scenario_fields(self):
        if self.grid is not None:
            return self
        if self.scenario is Scenario.DP_SSL:
            if self.selection is None:
                self.selection = SelectionConfig()
        elif self.selection is not None:
            raise ValueError(f"selection thresholds only apply to dp-ssl, not {self.scenario.value}")
        if self.scenario is Scenario.DEM_SSL:
            if self.regularization is None:
                self.regularization = RegularizationConfig()
        elif self.regularization is not None:
            raise ValueError(f"regularization only applies to dem-ssl, not {self.scenario.value}")
        if self.regularizer_divergence is not None and self.scenario is not Scenario.DEM_SSL:
            raise ValueError("regularizer_divergence only applies to dem-ssl")
        return self

    @property
    def spec(self) -> DivergenceSpec:
        return self.divergence.to_spec()

    @property
    def column_label(self) -> str:
        return self.label or self.scenario.display_name

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every semantic field"""
        payload = self.model_dump(mode='json', exclude=NON_SEMANTIC_FIELDS)
        canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def expand(self) -> List['ExperimentConfig']:
        """Cartesian product of grid divergences and scenario variants"""
        if self.grid is None:
            return [self]
        base = self.model_dump(exclude={'grid'})
        divergences = self.grid.divergences or [self.divergence]
        variants = self.grid.scenarios or [ScenarioVariant(scenario=self.scenario, label=self.label)]
        expanded = []
        for divergence in divergences:
            for variant in variants:
                data = dict(base)
                data.update(divergence=divergence.model_dump(), scenario=variant.scenario, label=variant.label)
                data['selection'] = _dump(variant.selection or self.selection) if variant.scenario is Scenario.DP_SSL else None
                data['regularization'] = (_dump(variant.regularization or self.regularization)
                                          if variant.scenario is Scenario.DEM_SSL else None)
                if variant.scenario is not Scenario.DEM_SSL:
                    data['regularizer_divergence'] = None
                if variant.balancing is not None:
                    data['balancing'] = variant.balancing
                if variant.noise_rate is not None:
                    data['noise_rate'] = variant.noise_rate
                expanded.append(parse_config(data))
        logger.info(f"Expanded '{self.name}' into {len(expanded)} configurations")
        return expanded

    def self_train_config(self, seed: int) -> SelfTrainConfig:
        selection = self.selection or SelectionConfig()
        regularization = self.regularization.to_weights() if self.regularization else RegularizationWeights()
        return SelfTrainConfig(
            spec=self.spec,
            reg=regularization,
            regularizer_spec=self.regularizer_divergence.to_spec() if self.regularizer_divergence else None,
            beta=None if self.beta == 'auto' else float(self.beta),
            max_iterations=self.training.iterations,
            thresholds=selection.to_thresholds(),
            balancing=self.balancing,
            noise_rate=self.noise_rate if self.scenario is Scenario.DP_SSL else 0.0,
            hidden=self.model.hidden,
            hidden_layers=self.model.hidden_layers,
            dropout=self.model.dropout,
            learning_rate=self.optimizer.learning_rate,
            momentum=self.optimizer.momentum,
            nesterov=self.optimizer.nesterov,
            weight_decay=self.optimizer.weight_decay,
            epochs=self.training.epochs,
            batch_size=self.training.batch_size,
            seed=seed,
        )


def _dump(section: Optional[BaseModel]) -> Optional[Dict]:
    return section.model_dump() if section is not None else None


def parse_config(data: Dict[str, Any]) -> ExperimentConfig:
    """Validate a mapping; errors carry dotted field paths"""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as error:
        raise ConfigurationError.from_validation_error(error) from error


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a YAML experiment file"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as error:
        raise ConfigurationError(f"{path} is not valid YAML: {error}") from error
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must contain a mapping at the top level")
    return parse_config(data)


def apply_overrides(config: ExperimentConfig, overrides: Dict[str, Any]) -> ExperimentConfig:
    """
    Replace fields addressed by dotted paths, e.g. {'training.epochs': 8}

    None values are ignored.
    """
    data = config.model_dump(exclude_none=True)
    if overrides.get('scenario') is not None:
        # Scenario-specific sections are refilled for the new scenario
        for section in ('selection', 'regularization', 'regularizer_divergence'):
            if not any(key.startswith(section) for key, value in overrides.items() if value is not None):
                data.pop(section, None)
    if overrides.get('dataset.path') is not None:
        data.get('dataset', {}).pop('synthetic', None)
    for path, value in overrides.items():
        if value is None:
            continue
        node = data
        parts = path.split('.')
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return parse_config(data)
