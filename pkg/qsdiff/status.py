"""Process exit codes for the qsd command line.

0 means a definite answer was produced, 1 flags bad input, 2 flags an honest
"cannot decide" and 3 flags a failure of the tool itself.
"""  # noqa: D205

from __future__ import annotations

EXIT_OK = 0
EXIT_PRECONDITION = 1
EXIT_UNDETERMINED = 2
EXIT_INTERNAL = 3
