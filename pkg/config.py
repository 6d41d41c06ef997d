import os
from dotenv import load_dotenv

# Settings come from the environment, optionally seeded from a .env file
load_dotenv()

# FFT worker threads (scipy.fft ``workers``); 1 keeps kernels single-threaded
CBF_THREADS = max(1, int(os.getenv('CBF_THREADS', 1)))

# Logging
CBF_LOG_LEVEL = os.getenv('CBF_LOG_LEVEL', 'INFO')
CBF_LOG_DIR = os.getenv('CBF_LOG_DIR', 'logs')

# Run defaults
CBF_DEFAULT_SEED = int(os.getenv('CBF_DEFAULT_SEED', 0))
CBF_CHECKPOINT_STRIDE = int(os.getenv('CBF_CHECKPOINT_STRIDE', 10))
