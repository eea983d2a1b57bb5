/** Anything the bridge cannot serve; the message ends up in response.json. */
export class BridgeError extends Error {}

/** A volume file the importer does not understand. */
export class UnsupportedFormatError extends BridgeError {}
