def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size experiment runs, enabled via CHAOSBSDE_RUN_SLOW=1")
