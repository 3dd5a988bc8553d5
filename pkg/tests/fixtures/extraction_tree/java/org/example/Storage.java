package org.example;

import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class Storage {
    private static final Logger LOG = LoggerFactory.getLogger(Storage.class);

    void open(String rootPath, int retries) {
        LOG.info("Cannot access storage directory " + rootPath);
        LOG.warn("Retrying open of {} after {} attempts", rootPath, retries);
        LOG.error("Failed to open storage at " + rootPath
                + " after " + retries + " retries");
        LOG.debug("open called");
        if (retries > 3) {
            LOG.error(String.format("Giving up on %s", rootPath));
        }
    }

    void close(Exception e) {
        LOG.warn("Close interrupted: " + e.getMessage(), e);
        LOG.trace("closing");
        this.log.info(
            "Closed storage {} cleanly",
            name());
        LOG.error("Shutdown hook failed", e);
    }
}
