#!/usr/bin/env python3
"""
Write experiment results as CSV tables and JSON reports

Output is deterministic: fixed float formatting, sorted JSON keys and no
timestamps, so identical runs produce byte-identical files.

The two formats spell floats differently. JSON uses the shortest repr that
round-trips (0.1), CSV uses %.17g (0.10000000000000001). Both read back to
the same double.
"""

import json
import math
import os
import re
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from .experiment_config import OUTPUT_DEFAULTS


def to_builtin(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values"""
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {'re': to_builtin(float(value.real)), 'im': to_builtin(float(value.imag))}
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    return value


def dumps(document: Dict[str, Any]) -> str:
    return json.dumps(to_builtin(document), indent=2, sort_keys=True) + '\n'


class ResultWriter:
    """Write the artifacts of one command into a run folder"""

    def __init__(self, output_dir: str = OUTPUT_DEFAULTS['directory'],
                 float_format: str = OUTPUT_DEFAULTS['float_format']):
        self.output_dir = output_dir
        self.float_format = float_format
        os.makedirs(output_dir, exist_ok=True)
        self.written = []

    def _path(self, name: str) -> str:
        # Clean name for the filesystem
        clean = re.sub(r'[^\w.-]', '_', name)
        return os.path.join(self.output_dir, clean)

    def write_csv(self, name: str, frame: pd.DataFrame) -> str:
        path = self._path(name)
        frame.to_csv(path, index=False, float_format=self.float_format, lineterminator='\n')
        self.written.append(path)
        return path

    def write_json(self, name: str, document: Dict[str, Any], config: Optional[Dict[str, Any]] = None) -> str:
        """JSON report; the config echo, when given, is embedded under 'config'"""
        document = dict(document)
        if config is not None:
            document['config'] = config
        path = self._path(name)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(dumps(document))
        self.written.append(path)
        return path
