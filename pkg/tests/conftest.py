import logging

import pytest


@pytest.fixture(autouse=True)
def quiet_rebirth_logs(caplog):
    # starved-cluster notices are expected in overfit scenarios
    logging.getLogger("switchclust.learn").setLevel(logging.ERROR)
    yield
    logging.getLogger("switchclust.learn").setLevel(logging.NOTSET)
