/** Hash router: `#/` shows the submission form, `#/jobs/<id>` the
 * status page. Each navigation aborts the previous view's in-flight
 * requests and polling timers.
 */

import { GatewayClient } from "./api.js";
import { renderSubmitPage } from "./form.js";
import { renderStatusPage, type StatusPageOptions } from "./status.js";

const JOB_ROUTE = /^#\/jobs\/([A-Za-z0-9][A-Za-z0-9._-]*)$/;

export interface RouterOptions {
  /** Forwarded to the status page (poll interval, save hook). */
  status?: Omit<StatusPageOptions, "signal">;
}

export interface Router {
  /** Re-render for the current hash; also wired to `hashchange`. */
  refresh(): void;
  /** Abort the active view and detach the `hashchange` listener. */
  dispose(): void;
}

export function startRouter(
  win: Window,
  root: HTMLElement,
  client: GatewayClient,
  options: RouterOptions = {},
): Router {
  let active: AbortController | null = null;

  function navigate(hash: string): void {
    if (win.location.hash === hash) refresh();
    else win.location.hash = hash; // triggers hashchange -> refresh
  }

  function refresh(): void {
    active?.abort();
    active = new AbortController();
    const signal = active.signal;
    const match = JOB_ROUTE.exec(win.location.hash);
    if (match !== null) {
      renderStatusPage(root, client, match[1], { ...options.status, signal });
    } else {
      renderSubmitPage(root, client, navigate, { signal });
    }
  }

  const onHashChange = (): void => refresh();
  win.addEventListener("hashchange", onHashChange);
  refresh();

  return {
    refresh,
    dispose(): void {
      win.removeEventListener("hashchange", onHashChange);
      active?.abort();
      active = null;
    },
  };
}
