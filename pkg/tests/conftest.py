import pytest

import sys
sys.path.append(".")

from fixtures import *
