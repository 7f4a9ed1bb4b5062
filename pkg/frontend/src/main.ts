/** Browser entry point: mounts the app on #app against the gateway
 * that served this page (same-origin API calls).
 */

import { GatewayClient } from "./api.js";
import { startRouter } from "./router.js";

const root = document.getElementById("app");
if (root === null) throw new Error("missing #app mount point");
startRouter(window, root, new GatewayClient(""));
