"""BLE contact tracing: environmental signatures, advertising simulation and RSS risk classification."""

from .classifiers import KINDS, encode_rss_8bit, load_classifier, pl_classify, predict, train
from .dataset_io import CaseDataset, ColumnMapping, load_case, split_train_test, summarize
from .filtering import FilterConfig, moving_average, performance_gain
from .risk_eval import classify_outcome, confusion_and_accuracy, evaluate_case
from .signal_model import PathLossModel, RssSample, estimate_distance, fit_path_loss, predict_rss
from .signature import generate_dictionary, generate_signature, match_signatures, quantize_signature
from .timing import DeviceTimingConfig, EncounterScenario, run_encounter, simulate_reception

__version__ = "0.1.0"
