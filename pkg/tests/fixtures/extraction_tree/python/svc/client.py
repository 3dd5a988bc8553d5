import logging

logger = logging.getLogger(__name__)
log = logging.getLogger("svc")


def connect(host, port, attempts):
    logger.info("Connecting to %s:%d", host, port)
    logger.warning(f"Connection to {host} slow after {attempts} attempts")
    logging.error("Connection refused by " + host)
    logger.debug("socket options set")
    log.info(
        "Handshake completed "
        "in %.2f seconds",
        0.5,
    )
    logger.warn("Deprecated port {} in use".format(port))
    logger.exception("Unexpected failure while reading from %s", host)
    logger.critical("giving up")
    logger.error("Disk %s is %d%% full" % (host, 90))
    logger.info('Session closed')
