import os
from dotenv import load_dotenv

load_dotenv()

class Settings:
    THREADS: int = int(os.getenv("VARLAB_THREADS", str(os.cpu_count() or 1)))
    SEED: int = int(os.getenv("VARLAB_SEED", "20100913"))
    OUTPUT_DIR: str = os.getenv("VARLAB_OUTPUT_DIR", "results")
    LOG_LEVEL: str = os.getenv("VARLAB_LOG_LEVEL", "INFO")
    CHUNK_ROWS: int = int(os.getenv("VARLAB_CHUNK_ROWS", "512"))  # row block of O(n^2) sums

settings = Settings()
