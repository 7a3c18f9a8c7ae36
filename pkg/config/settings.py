import json
import os

from dotenv import load_dotenv

load_dotenv()

CONFIG_DIR = os.path.dirname(os.path.abspath(__file__))


class Settings:
    # Global run configuration
    SEED = int(os.getenv('DOMAINSHIFT_SEED', 12345))
    LOG_LEVEL = os.getenv('DOMAINSHIFT_LOG_LEVEL', 'INFO').upper()
    JOBS = int(os.getenv('DOMAINSHIFT_JOBS', 1))
    DOMAIN_CONFIG_PATH = os.getenv('DOMAINSHIFT_DOMAIN_CONFIG', os.path.join(CONFIG_DIR, 'domains.json'))
    CODE_VERSION = 'domainshift-lab 1.0.0'

    # Object selection
    TRACK_MIN_PT = 0.5
    JET_RADIUS = 0.4
    JET_MIN_PT = 30.0
    JET_MAX_ETA = 2.5
    SB_JET_COUNT_PT = 40.0
    TRUTH_MATCH_CONE = 0.4

    # Prepared samples
    JET_MAX_TRACKS = 50
    KNN_K = 8
    MET_MAX_TRACKS = 128
    REWEIGHT_BINS = 20
    MET_PROFILE_EDGES = [0.0, 20.0, 40.0, 60.0, 80.0, 100.0, 150.0, 250.0]
    MET_HIGHLIGHT_BIN = (40.0, 60.0)

    # Experiment grid
    SIZE_GRID = [1000, 2500, 5000, 10000, 20000, 40000]
    SEEDS_PER_POINT = 5
    SPLIT_FRACTIONS = (0.7, 0.15, 0.15)

    # Training defaults per task
    TRAIN_DEFAULTS = {
        'sb': {'lr': 1e-3},
        'qg': {'lr': 1e-3},
        'met': {'lr': 3e-4},
    }
    ADAM = {'beta1': 0.9, 'beta2': 0.999, 'eps': 1e-8}
    BATCH_SIZE = 128
    MAX_EPOCHS = 100
    PATIENCE = 10

    # Architectures
    MODEL_DEFAULTS = {
        'sb': {'inputs': 12, 'hidden': [64, 64, 32], 'dropout': 0.1},
        'qg': {'inputs': 6, 'edgeconv': [32, 64, 128], 'head': [128, 64], 'dropout': 0.1},
        'met': {'inputs': 4, 'model_dim': 64, 'layers': 3, 'heads': 4, 'ff_dim': 128,
                'head_dim': 32, 'dropout': 0.1, 'target_scale': 50.0},
    }

    # Losses
    MET_LAMBDA_BIAS = 1.0
    BCE_CLAMP = 1e-7

    # Canonical freeze specs per task
    FREEZE_SPECS = {
        'sb': ['sb.dense0'],
        'qg': ['qg.edgeconv0', 'qg.edgeconv1', 'qg.edgeconv2'],
        'met': ['met.embed', 'met.embed_norm', 'met.cls', 'met.encoder0', 'met.encoder1', 'met.encoder2'],
    }

    def load_domain_file(self, path=None):
        """Read the domain/generator configuration JSON"""
        with open(path or self.DOMAIN_CONFIG_PATH, 'r', encoding='utf-8') as fh:
            return json.load(fh)


settings = Settings()
